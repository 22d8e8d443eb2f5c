#pragma once

// Resource-utilization tables and the overhead an isolated floorplan costs.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace idfsim::campaign {

struct UtilizationRow {
  std::string site_type;
  std::optional<std::int64_t> used;
  std::optional<std::int64_t> fixed;
  std::optional<std::int64_t> available;
};

struct UtilizationReport {
  std::vector<UtilizationRow> rows;

  /// First row with this site type, or nullptr.
  [[nodiscard]] const UtilizationRow* find(std::string_view site_type) const;
};

/// CSV `site_type,used,fixed,available`; `-` or empty cells are absent.
/// An optional header line and `#` comment lines are skipped.
[[nodiscard]] UtilizationReport parse_utilization(std::string_view text);
[[nodiscard]] UtilizationReport load_utilization(const std::string& path);

struct OverheadRow {
  std::string site_type;  // summary name, e.g. "Slice LUTs"
  std::string label;      // name as it appears in the utilization report
  std::int64_t idf_overhead = 0;
  double percent = 0;
};

struct OverheadResult {
  std::vector<OverheadRow> rows;
  std::vector<std::string> warnings;
};

/// overhead = available(without) - available(with); percent relative to
/// available(without). Rows with no availability on either side report 0.
/// Repeated site types are reported once, from their first occurrence.
[[nodiscard]] OverheadResult overhead_diff(const UtilizationReport& without_idf,
                                           const UtilizationReport& with_idf);

/// `site_type,overhead,percent`, percent with one decimal.
[[nodiscard]] std::string overhead_csv(const std::vector<OverheadRow>& rows);

}  // namespace idfsim::campaign
