#pragma once

// Isolation floorplans and the six isolation design-rule checks.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace idfsim::idf {

enum class TileKind : std::uint8_t { Clb, Int, Bram, Dsp, Iob, Null };
[[nodiscard]] const char* tile_kind_name(TileKind k);

struct Point {
  int x = 0;
  int y = 0;
  auto operator<=>(const Point&) const = default;
};

/// Inclusive rectangle.
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  [[nodiscard]] bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  [[nodiscard]] bool overlaps(const Rect& o) const {
    return x0 <= o.x1 && o.x0 <= x1 && y0 <= o.y1 && o.y0 <= y1;
  }
  bool operator==(const Rect&) const = default;
};

struct IsolationRegion {
  std::string name;
  std::string group;
  Rect rect;
  bool operator==(const IsolationRegion&) const = default;
};

struct Tile {
  TileKind kind = TileKind::Clb;
  std::optional<std::string> group;  // explicit placement outside any region rectangle
  bool operator==(const Tile&) const = default;
};

struct PinPlacement {
  std::string name;
  std::string group;
  Point site;
  int bank = 0;
  Point package;  // (prow, pcol) stored as (x=pcol, y=prow)
  bool operator==(const PinPlacement&) const = default;
};

enum class PipUsage : std::uint8_t { Used, Unused };

struct Pip {
  Point at;
  PipUsage usage = PipUsage::Used;
  bool operator==(const Pip&) const = default;
};

struct NetRecord {
  std::string name;
  bool is_clock = false;
  std::string source;
  std::vector<std::string> loads;
  std::vector<Pip> pips;

  /// Some load lies in a region other than the source.
  [[nodiscard]] bool inter_region() const;
  bool operator==(const NetRecord&) const = default;
};

struct Floorplan {
  int cols = 0;
  int rows = 0;
  std::map<Point, Tile> tiles;  // tiles not listed are CLB
  std::vector<IsolationRegion> regions;
  std::set<Point> fence;
  std::vector<PinPlacement> pins;
  std::vector<NetRecord> nets;

  [[nodiscard]] bool in_grid(Point p) const { return p.x >= 0 && p.y >= 0 && p.x < cols && p.y < rows; }
  [[nodiscard]] TileKind kind_at(Point p) const;
  [[nodiscard]] const IsolationRegion* region(std::string_view name) const;
  /// Isolation group owning an occupied (non-NULL) tile, if any.
  [[nodiscard]] std::optional<std::string> owner(Point p) const;
  bool operator==(const Floorplan&) const = default;
};

class FloorplanError : public std::runtime_error {
 public:
  FloorplanError(std::size_t line, const std::string& what);
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

[[nodiscard]] Floorplan parse_floorplan(std::string_view text);
[[nodiscard]] Floorplan load_floorplan(const std::string& path);

enum class Severity : std::uint8_t { Info, Warning, Error };
[[nodiscard]] const char* severity_name(Severity s);

struct DrcViolation {
  int check = 0;  // 1..6
  Severity severity = Severity::Error;
  std::vector<std::string> subjects;
  std::string message;

  /// `IDF-<n>|<severity>|<subjects>|<message>`
  [[nodiscard]] std::string to_line() const;
};

/// Report-provenance inputs. Missing fields print as "unknown".
struct Environment {
  std::optional<std::string> tool_version;
  std::optional<std::string> date;
  std::optional<std::string> design;
  std::optional<std::string> directory;
  std::optional<std::string> user;
  std::optional<std::string> platform;
  std::optional<std::string> host;

  /// Reads the live process environment (clock, cwd, USER, uname).
  [[nodiscard]] static Environment current(std::string design);
};

[[nodiscard]] std::string check_idf1(const Floorplan& plan, const Environment& env);
[[nodiscard]] std::vector<DrcViolation> check_idf2(const Floorplan& plan, bool strict_banks = false);
[[nodiscard]] std::vector<DrcViolation> check_idf3(const Floorplan& plan);
[[nodiscard]] std::vector<DrcViolation> check_idf4(const Floorplan& plan);
[[nodiscard]] std::vector<DrcViolation> check_idf5(const Floorplan& plan);
[[nodiscard]] std::vector<DrcViolation> check_idf6(const Floorplan& plan);

struct VerifyOptions {
  bool strict_banks = false;
};

struct VerifyReport {
  std::string provenance;
  std::vector<DrcViolation> violations;

  [[nodiscard]] std::size_t errors() const;
  [[nodiscard]] std::size_t count(int check) const;
  [[nodiscard]] std::string to_text() const;
  [[nodiscard]] std::string to_lines() const;
};

[[nodiscard]] VerifyReport verify(const Floorplan& plan, const Environment& env, VerifyOptions options = {});

enum class Orientation : std::uint8_t { Horizontal, Vertical };

struct FenceConsequence {
  bool uncrossable = false;
  std::vector<int> removed_spans;  // route lengths that can no longer cross
  bool operator==(const FenceConsequence&) const = default;
};

[[nodiscard]] FenceConsequence fence_consequence(int width, Orientation orientation);

/// Empty-tile gap between two regions along each axis; nullopt when the
/// rectangles do not share any row (horizontal) or column (vertical).
struct FenceWidths {
  std::optional<int> horizontal;
  std::optional<int> vertical;
};

[[nodiscard]] FenceWidths min_fence_between(const Floorplan& plan, std::string_view a, std::string_view b);

}  // namespace idfsim::idf
