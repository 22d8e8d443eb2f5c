#include "idfsim/idf.hpp"

#include <fmt/format.h>
#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace idfsim::idf {

namespace {

constexpr const char* kToolVersion = "idfsim 1.0";

constexpr std::array<const char*, 7> kCheckTitles = {
    "", "Provenance", "I/O Bank", "Package Pin", "Floorplan", "Placement", "Routing"};

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? p : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

class LineParser {
 public:
  LineParser(std::size_t line, std::vector<std::string_view> tokens) : line_(line), tok_(std::move(tokens)) {}

  [[nodiscard]] bool done() const { return pos_ >= tok_.size(); }

  std::string_view word(const char* what) {
    if (done()) fail(fmt::format("missing {}", what));
    return tok_[pos_++];
  }

  void keyword(std::string_view kw) {
    const std::string_view w = word(std::string(kw).c_str());
    if (w != kw) fail(fmt::format("expected '{}', got '{}'", kw, w));
  }

  bool optional_keyword(std::string_view kw) {
    if (!done() && tok_[pos_] == kw) {
      ++pos_;
      return true;
    }
    return false;
  }

  int integer(const char* what) { return to_int(word(what), what); }

  int to_int(std::string_view s, const char* what) const {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(fmt::format("bad {} '{}'", what, s));
    return v;
  }

  Rect rect() {
    Rect r{integer("x0"), integer("y0"), integer("x1"), integer("y1")};
    if (r.x0 > r.x1 || r.y0 > r.y1) fail("rectangle corners out of order");
    return r;
  }

  void end() const {
    if (!done()) fail(fmt::format("unexpected '{}'", tok_[pos_]));
  }

  [[noreturn]] void fail(const std::string& msg) const { throw FloorplanError(line_, msg); }

 private:
  std::size_t line_;
  std::vector<std::string_view> tok_;
  std::size_t pos_ = 0;
};

TileKind parse_kind(const LineParser& lp, std::string_view s) {
  static constexpr std::array<std::pair<std::string_view, TileKind>, 6> kKinds = {{
      {"CLB", TileKind::Clb},
      {"INT", TileKind::Int},
      {"BRAM", TileKind::Bram},
      {"DSP", TileKind::Dsp},
      {"IOB", TileKind::Iob},
      {"NULL", TileKind::Null},
  }};
  for (const auto& [name, kind] : kKinds) {
    if (name == s) return kind;
  }
  lp.fail(fmt::format("unknown tile kind '{}'", s));
}

std::string point_name(Point p) { return fmt::format("({},{})", p.x, p.y); }

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

// Tiles strictly between two closed intervals; negative when they overlap.
int interval_gap(int a0, int a1, int b0, int b1) {
  if (a1 < b0) return b0 - a1 - 1;
  if (b1 < a0) return a0 - b1 - 1;
  return -1;
}

}  // namespace

const char* tile_kind_name(TileKind k) {
  switch (k) {
    case TileKind::Clb: return "CLB";
    case TileKind::Int: return "INT";
    case TileKind::Bram: return "BRAM";
    case TileKind::Dsp: return "DSP";
    case TileKind::Iob: return "IOB";
    case TileKind::Null: return "NULL";
  }
  return "?";
}

const char* severity_name(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Error: return "error";
  }
  return "?";
}

FloorplanError::FloorplanError(std::size_t line, const std::string& what)
    : std::runtime_error(fmt::format("line {}: {}", line, what)), line_(line) {}

bool NetRecord::inter_region() const {
  return std::any_of(loads.begin(), loads.end(), [&](const std::string& l) { return l != source; });
}

TileKind Floorplan::kind_at(Point p) const {
  const auto it = tiles.find(p);
  return it == tiles.end() ? TileKind::Clb : it->second.kind;
}

const IsolationRegion* Floorplan::region(std::string_view name) const {
  for (const IsolationRegion& r : regions) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::optional<std::string> Floorplan::owner(Point p) const {
  const auto it = tiles.find(p);
  if (it != tiles.end()) {
    if (it->second.kind == TileKind::Null) return std::nullopt;
    if (it->second.group) return it->second.group;
  }
  for (const IsolationRegion& r : regions) {
    if (r.rect.contains(p)) return r.group;
  }
  return std::nullopt;
}

Floorplan parse_floorplan(std::string_view text) {
  Floorplan plan;
  bool have_device = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::set<std::string> pin_names;
  std::set<std::string> net_names;
  std::set<Point> pkg_positions;
  struct PendingNet {
    std::size_t line;
    NetRecord net;
  };
  std::vector<PendingNet> pending;
  std::vector<std::pair<std::size_t, Point>> grouped_tiles;

  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const std::size_t hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto tokens = tokenize(raw);
    if (tokens.empty()) continue;
    LineParser lp(line_no, tokens);
    const std::string_view directive = lp.word("directive");

    if (directive == "DEVICE") {
      if (have_device) lp.fail("duplicate DEVICE");
      plan.cols = lp.integer("cols");
      plan.rows = lp.integer("rows");
      if (plan.cols <= 0 || plan.rows <= 0) lp.fail("grid must be non-empty");
      lp.end();
      have_device = true;
      continue;
    }
    if (!have_device) lp.fail("DEVICE must come first");

    auto check_rect = [&](const Rect& r) {
      if (!plan.in_grid({r.x0, r.y0}) || !plan.in_grid({r.x1, r.y1})) lp.fail("rectangle outside the grid");
    };
    auto check_point = [&](Point p) {
      if (!plan.in_grid(p)) lp.fail(fmt::format("site {} outside the grid", point_name(p)));
    };

    if (directive == "TILE") {
      const Point p{lp.integer("x"), lp.integer("y")};
      check_point(p);
      Tile t;
      t.kind = parse_kind(lp, lp.word("kind"));
      if (lp.optional_keyword("GROUP")) {
        t.group = std::string(lp.word("group"));
        if (t.kind == TileKind::Null) lp.fail("a NULL tile cannot carry placed logic");
        grouped_tiles.emplace_back(line_no, p);
      }
      lp.end();
      if (plan.tiles.count(p)) lp.fail(fmt::format("tile {} declared twice", point_name(p)));
      plan.tiles.emplace(p, std::move(t));
    } else if (directive == "REGION") {
      IsolationRegion r;
      r.name = std::string(lp.word("region name"));
      lp.keyword("GROUP");
      r.group = std::string(lp.word("group"));
      lp.keyword("RECT");
      r.rect = lp.rect();
      lp.end();
      check_rect(r.rect);
      if (plan.region(r.name)) lp.fail(fmt::format("duplicate region '{}'", r.name));
      plan.regions.push_back(std::move(r));
    } else if (directive == "FENCE") {
      lp.keyword("RECT");
      const Rect r = lp.rect();
      lp.end();
      check_rect(r);
      for (int x = r.x0; x <= r.x1; ++x) {
        for (int y = r.y0; y <= r.y1; ++y) plan.fence.insert({x, y});
      }
    } else if (directive == "PIN") {
      PinPlacement pin;
      pin.name = std::string(lp.word("pin name"));
      lp.keyword("GROUP");
      pin.group = std::string(lp.word("group"));
      lp.keyword("SITE");
      pin.site = {lp.integer("x"), lp.integer("y")};
      lp.keyword("BANK");
      pin.bank = lp.integer("bank");
      lp.keyword("PKG");
      const int prow = lp.integer("prow");
      const int pcol = lp.integer("pcol");
      pin.package = {pcol, prow};
      lp.end();
      check_point(pin.site);
      if (!pin_names.insert(pin.name).second) lp.fail(fmt::format("duplicate pin '{}'", pin.name));
      if (!pkg_positions.insert(pin.package).second) {
        lp.fail(fmt::format("package position ({},{}) used twice", prow, pcol));
      }
      plan.pins.push_back(std::move(pin));
    } else if (directive == "NET") {
      NetRecord net;
      net.name = std::string(lp.word("net name"));
      net.is_clock = lp.optional_keyword("CLOCK");
      lp.keyword("SRC");
      net.source = std::string(lp.word("source region"));
      lp.keyword("LOADS");
      for (std::string_view l : split(lp.word("load list"), ',')) {
        if (l.empty()) lp.fail("empty load region");
        net.loads.emplace_back(l);
      }
      if (lp.optional_keyword("PIPS")) {
        for (std::string_view entry : split(lp.word("PIP list"), ';')) {
          if (entry.empty()) continue;
          const auto f = split(entry, ':');
          if (f.size() != 3) lp.fail(fmt::format("bad PIP '{}', expected x:y:used|unused", entry));
          Pip pip;
          pip.at = {lp.to_int(f[0], "PIP x"), lp.to_int(f[1], "PIP y")};
          if (f[2] == "used") {
            pip.usage = PipUsage::Used;
          } else if (f[2] == "unused") {
            pip.usage = PipUsage::Unused;
          } else {
            lp.fail(fmt::format("bad PIP usage '{}'", f[2]));
          }
          check_point(pip.at);
          net.pips.push_back(pip);
        }
      }
      lp.end();
      if (!net_names.insert(net.name).second) lp.fail(fmt::format("duplicate net '{}'", net.name));
      pending.push_back({line_no, std::move(net)});
    } else {
      lp.fail(fmt::format("unknown directive '{}'", directive));
    }
  }
  if (!have_device) throw FloorplanError(line_no, "missing DEVICE");

  // Semantic checks that need the whole file.
  for (const Point& p : plan.fence) {
    for (const IsolationRegion& r : plan.regions) {
      if (r.rect.contains(p)) {
        throw FloorplanError(0, fmt::format("fence tile {} lies inside region '{}'", point_name(p), r.name));
      }
    }
  }
  for (const auto& [line, p] : grouped_tiles) {
    if (plan.fence.count(p)) throw FloorplanError(line, fmt::format("tile {} is on the fence", point_name(p)));
    const std::string& g = *plan.tiles.at(p).group;
    for (const IsolationRegion& r : plan.regions) {
      if (r.rect.contains(p) && r.group != g) {
        throw FloorplanError(line, fmt::format("tile {} group '{}' conflicts with region '{}'", point_name(p),
                                               g, r.name));
      }
    }
  }
  for (PendingNet& pn : pending) {
    if (!plan.region(pn.net.source)) {
      throw FloorplanError(pn.line, fmt::format("net '{}': unknown source region '{}'", pn.net.name, pn.net.source));
    }
    for (const std::string& l : pn.net.loads) {
      if (!plan.region(l)) {
        throw FloorplanError(pn.line, fmt::format("net '{}': unknown load region '{}'", pn.net.name, l));
      }
    }
    plan.nets.push_back(std::move(pn.net));
  }
  return plan;
}

Floorplan load_floorplan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_floorplan(ss.str());
}

std::string DrcViolation::to_line() const {
  return fmt::format("IDF-{}|{}|{}|{}", check, severity_name(severity), join(subjects, ","), message);
}

Environment Environment::current(std::string design) {
  Environment env;
  env.tool_version = kToolVersion;
  env.design = std::move(design);
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  if (gmtime_r(&now, &tm) != nullptr) {
    std::array<char, 32> buf{};
    if (std::strftime(buf.data(), buf.size(), "%Y-%m-%d %H:%M:%S UTC", &tm) > 0) env.date = buf.data();
  }
  std::error_code ec;
  const auto cwd = std::filesystem::current_path(ec);
  if (!ec) env.directory = cwd.string();
  if (const char* u = std::getenv("USER"); u != nullptr && *u) env.user = u;
  utsname uts{};
  if (uname(&uts) == 0) {
    env.platform = fmt::format("{} {}", uts.sysname, uts.machine);
    env.host = uts.nodename;
  }
  return env;
}

std::string check_idf1(const Floorplan& plan, const Environment& env) {
  auto v = [](const std::optional<std::string>& s) -> std::string_view { return s ? *s : "unknown"; };
  std::string out = "IDF-1 Provenance\n";
  out += fmt::format("  Tool version: {}\n", v(env.tool_version));
  out += fmt::format("  Date:         {}\n", v(env.date));
  out += fmt::format("  Design:       {}\n", v(env.design));
  out += fmt::format("  Directory:    {}\n", v(env.directory));
  out += fmt::format("  User:         {}\n", v(env.user));
  out += fmt::format("  Platform:     {}\n", v(env.platform));
  out += fmt::format("  Host:         {}\n", v(env.host));
  out += fmt::format("  Floorplan:    {}x{} tiles, {} regions, {} pins, {} nets\n", plan.cols, plan.rows,
                     plan.regions.size(), plan.pins.size(), plan.nets.size());
  return out;
}

std::vector<DrcViolation> check_idf2(const Floorplan& plan, bool strict_banks) {
  std::map<int, std::map<std::string, std::vector<std::string>>> banks;
  for (const PinPlacement& p : plan.pins) banks[p.bank][p.group].push_back(p.name);
  std::vector<DrcViolation> out;
  for (const auto& [bank, groups] : banks) {
    if (groups.size() < 2) continue;
    DrcViolation v;
    v.check = 2;
    v.severity = strict_banks ? Severity::Error : Severity::Warning;
    std::vector<std::string> names;
    for (const auto& [g, pins] : groups) {
      names.push_back(g);
      v.subjects.insert(v.subjects.end(), pins.begin(), pins.end());
    }
    v.message = fmt::format("bank {} holds IOBs of {} isolation groups: {}", bank, groups.size(), join(names, ", "));
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<DrcViolation> check_idf3(const Floorplan& plan) {
  std::vector<DrcViolation> out;
  for (std::size_t i = 0; i < plan.pins.size(); ++i) {
    for (std::size_t j = i + 1; j < plan.pins.size(); ++j) {
      const PinPlacement& a = plan.pins[i];
      const PinPlacement& b = plan.pins[j];
      if (a.group == b.group) continue;
      const int d = std::max(std::abs(a.package.x - b.package.x), std::abs(a.package.y - b.package.y));
      if (d != 1) continue;
      out.push_back({3, Severity::Error, {a.name, b.name},
                     fmt::format("package pins {} ({}) and {} ({}) are adjacent", a.name, a.group, b.name, b.group)});
    }
  }
  return out;
}

std::vector<DrcViolation> check_idf4(const Floorplan& plan) {
  std::vector<DrcViolation> out;
  for (std::size_t i = 0; i < plan.regions.size(); ++i) {
    for (std::size_t j = i + 1; j < plan.regions.size(); ++j) {
      const IsolationRegion& a = plan.regions[i];
      const IsolationRegion& b = plan.regions[j];
      if (a.group == b.group) continue;
      const int gx = interval_gap(a.rect.x0, a.rect.x1, b.rect.x0, b.rect.x1);
      const int gy = interval_gap(a.rect.y0, a.rect.y1, b.rect.y0, b.rect.y1);
      if (gx < 0 && gy < 0) {
        out.push_back({4, Severity::Error, {a.name, b.name},
                       fmt::format("regions {} and {} overlap", a.name, b.name)});
      } else if (gx <= 0 && gy <= 0) {
        out.push_back({4, Severity::Error, {a.name, b.name},
                       fmt::format("regions {} and {} are adjacent with no fence", a.name, b.name)});
      }
    }
  }
  return out;
}

std::vector<DrcViolation> check_idf5(const Floorplan& plan) {
  std::vector<std::optional<std::string>> owners(static_cast<std::size_t>(plan.cols) * plan.rows);
  auto at = [&](int x, int y) -> std::optional<std::string>& {
    return owners[static_cast<std::size_t>(y) * plan.cols + x];
  };
  for (int y = 0; y < plan.rows; ++y) {
    for (int x = 0; x < plan.cols; ++x) at(x, y) = plan.owner({x, y});
  }
  std::vector<DrcViolation> out;
  auto compare = [&](Point p, Point q) {
    const auto& a = at(p.x, p.y);
    const auto& b = at(q.x, q.y);
    if (!a || !b || *a == *b) return;
    out.push_back({5, Severity::Error, {point_name(p), point_name(q)},
                   fmt::format("tile {} ({}) touches tile {} ({})", point_name(p), *a, point_name(q), *b)});
  };
  for (int y = 0; y < plan.rows; ++y) {
    for (int x = 0; x < plan.cols; ++x) {
      if (x + 1 < plan.cols) compare({x, y}, {x + 1, y});
      if (y + 1 < plan.rows) compare({x, y}, {x, y + 1});
    }
  }
  return out;
}

std::vector<DrcViolation> check_idf6(const Floorplan& plan) {
  std::vector<DrcViolation> out;
  std::map<Point, std::vector<const NetRecord*>> by_tile;
  for (const NetRecord& n : plan.nets) {
    if (!n.inter_region()) continue;
    const std::set<std::string> load_regions(n.loads.begin(), n.loads.end());
    if (load_regions.size() >= 2) {
      out.push_back({6, Severity::Error, {n.name},
                     fmt::format("(a) net {} has loads in {} regions", n.name, load_regions.size())});
    }
    std::vector<std::string> bad;
    for (const Pip& p : n.pips) {
      if (!plan.fence.count(p.at)) continue;
      if (n.is_clock && p.usage == PipUsage::Unused) continue;
      bad.push_back(point_name(p.at));
    }
    if (!bad.empty()) {
      std::vector<std::string> subjects{n.name};
      subjects.insert(subjects.end(), bad.begin(), bad.end());
      out.push_back({6, Severity::Error, std::move(subjects),
                     fmt::format("(b) {}net {} uses fence PIPs at {}", n.is_clock ? "clock " : "", n.name,
                                 join(bad, " "))});
    }
    std::set<Point> tiles;
    for (const Pip& p : n.pips) tiles.insert(p.at);
    for (const Point& t : tiles) by_tile[t].push_back(&n);
  }
  for (const auto& [tile, nets] : by_tile) {
    if (nets.size() < 2) continue;
    auto key = [](const NetRecord* n) {
      return std::make_pair(n->source, std::set<std::string>(n->loads.begin(), n->loads.end()));
    };
    const auto first = key(nets.front());
    if (std::all_of(nets.begin(), nets.end(), [&](const NetRecord* n) { return key(n) == first; })) continue;
    std::vector<std::string> subjects{point_name(tile)};
    for (const NetRecord* n : nets) subjects.push_back(n->name);
    out.push_back({6, Severity::Error, subjects,
                   fmt::format("(c) tile {} carries inter-region nets without a common source and load",
                               point_name(tile))});
  }
  return out;
}

std::size_t VerifyReport::errors() const {
  return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                [](const DrcViolation& v) { return v.severity == Severity::Error; }));
}

std::size_t VerifyReport::count(int check) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [&](const DrcViolation& v) { return v.check == check; }));
}

std::string VerifyReport::to_text() const {
  std::string out = provenance;
  for (int c = 2; c <= 6; ++c) {
    out += fmt::format("IDF-{} {}: {} violation(s)\n", c, kCheckTitles[c], count(c));
    for (const DrcViolation& v : violations) {
      if (v.check == c) out += fmt::format("  [{}] {}\n", severity_name(v.severity), v.message);
    }
  }
  out += fmt::format("Total: {} violation(s), {} error(s)\n", violations.size(), errors());
  return out;
}

std::string VerifyReport::to_lines() const {
  std::string out;
  for (const DrcViolation& v : violations) out += v.to_line() + "\n";
  return out;
}

VerifyReport verify(const Floorplan& plan, const Environment& env, VerifyOptions options) {
  VerifyReport r;
  r.provenance = check_idf1(plan, env);
  for (auto&& part : {check_idf2(plan, options.strict_banks), check_idf3(plan), check_idf4(plan),
                      check_idf5(plan), check_idf6(plan)}) {
    r.violations.insert(r.violations.end(), part.begin(), part.end());
  }
  return r;
}

FenceConsequence fence_consequence(int width, Orientation orientation) {
  if (width < 1) throw std::out_of_range(fmt::format("fence width must be at least 1, got {}", width));
  FenceConsequence c;
  const int uncrossable_at = orientation == Orientation::Horizontal ? 6 : 9;
  if (width >= uncrossable_at) {
    c.uncrossable = true;
    return c;
  }
  // Route spans available for crossing: 1, 2, 4 and (vertically) 6.
  for (int span : {1, 2, 4, 6}) {
    if (span <= width) c.removed_spans.push_back(span);
  }
  return c;
}

FenceWidths min_fence_between(const Floorplan& plan, std::string_view a, std::string_view b) {
  const IsolationRegion* ra = plan.region(a);
  const IsolationRegion* rb = plan.region(b);
  if (!ra || !rb) throw std::invalid_argument(fmt::format("unknown region '{}'", ra ? b : a));
  if (ra->rect.overlaps(rb->rect)) {
    throw std::invalid_argument(fmt::format("regions {} and {} overlap", a, b));
  }
  const int gx = interval_gap(ra->rect.x0, ra->rect.x1, rb->rect.x0, rb->rect.x1);
  const int gy = interval_gap(ra->rect.y0, ra->rect.y1, rb->rect.y0, rb->rect.y1);
  FenceWidths w;
  if (gy < 0) w.horizontal = gx;
  if (gx < 0) w.vertical = gy;
  return w;
}

}  // namespace idfsim::idf
