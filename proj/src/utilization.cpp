#include "idfsim/utilization.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "idfsim/types.hpp"

namespace idfsim::campaign {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<std::int64_t> cell(std::string_view s, std::size_t line_no) {
  if (s.empty() || s == "-") return std::nullopt;
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(line_no, fmt::format("bad number '{}'", s));
  }
  return v;
}

struct Alias {
  const char* report_name;
  const char* summary_name;
};

// Report site names that the overhead summary spells differently.
constexpr Alias kAliases[] = {
    {"Slice Look Up Tables", "Slice LUTs"},
    {"RAMB36/FIFO*", "Block RAMB36/FIFO &RAMB36E1"},
    {"DSPs", "DSP"},
    {"Bonded IOB", "Bonded IOB's"},
};

std::string summary_name(const std::string& report_name) {
  for (const Alias& a : kAliases) {
    if (report_name == a.report_name) return a.summary_name;
  }
  return report_name;
}

}  // namespace

const UtilizationRow* UtilizationReport::find(std::string_view site_type) const {
  for (const UtilizationRow& r : rows) {
    if (r.site_type == site_type) return &r;
  }
  return nullptr;
}

UtilizationReport parse_utilization(std::string_view text) {
  UtilizationReport report;
  std::size_t line_no = 0;
  bool first_data = true;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split(line);
    if (first_data) {
      first_data = false;
      if (cells.size() >= 2 && cells[0] == "site_type") continue;
    }
    if (cells.size() != 4) {
      throw ParseError(line_no, fmt::format("expected 4 cells, got {}", cells.size()));
    }
    if (cells[0].empty()) throw ParseError(line_no, "empty site type");
    report.rows.push_back({std::string(cells[0]), cell(cells[1], line_no), cell(cells[2], line_no),
                           cell(cells[3], line_no)});
  }
  return report;
}

UtilizationReport load_utilization(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_utilization(ss.str());
}

OverheadResult overhead_diff(const UtilizationReport& without_idf, const UtilizationReport& with_idf) {
  OverheadResult out;
  std::set<std::string> seen;
  for (const UtilizationRow& base : without_idf.rows) {
    if (!seen.insert(base.site_type).second) continue;
    OverheadRow row;
    row.site_type = summary_name(base.site_type);
    row.label = base.site_type;
    const UtilizationRow* other = with_idf.find(base.site_type);
    if (other == nullptr) {
      out.warnings.push_back(fmt::format("'{}' missing from the isolated report", base.site_type));
      continue;
    }
    if (base.available && other->available) {
      row.idf_overhead = *base.available - *other->available;
      row.percent = *base.available == 0 ? 0.0 : 100.0 * static_cast<double>(row.idf_overhead) /
                                                       static_cast<double>(*base.available);
    } else if (base.available || other->available) {
      out.warnings.push_back(fmt::format("'{}' has availability on one side only", base.site_type));
    }
    out.rows.push_back(std::move(row));
  }
  for (const UtilizationRow& r : with_idf.rows) {
    if (without_idf.find(r.site_type) == nullptr) {
      out.warnings.push_back(fmt::format("'{}' missing from the baseline report", r.site_type));
    }
  }
  return out;
}

std::string overhead_csv(const std::vector<OverheadRow>& rows) {
  std::string out = "site_type,overhead,percent\n";
  for (const OverheadRow& r : rows) {
    out += fmt::format("{},{},{:.1f}\n", r.site_type, r.idf_overhead, r.percent);
  }
  return out;
}

}  // namespace idfsim::campaign
