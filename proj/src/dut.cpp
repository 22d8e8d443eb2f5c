#include "idfsim/dut.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <unordered_map>

namespace idfsim::dut {

namespace {

std::uint64_t xorshift64star(std::uint64_t& state) {
  state ^= state >> 12;
  state ^= state << 25;
  state ^= state >> 27;
  return state * 0x2545F4914F6CDD1DULL;
}

// Unbiased draw in [0, n) independent of the standard library's distributions.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

Block128 block_from_hex(std::string_view hex) {
  if (hex.size() != 32) throw RangeError("128-bit block needs 32 hex digits");
  Block128 b{};
  for (std::size_t i = 0; i < 16; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw RangeError(fmt::format("bad hex digit in '{}'", hex));
    b[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return b;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) s += fmt::format("{:02x}", b);
  return s;
}

const char* variant_name(Variant v) { return v == Variant::WithIdf ? "idf" : "noidf"; }

const char* criticality_name(Criticality c) {
  switch (c) {
    case Criticality::NotCritical: return "none";
    case Criticality::CriticalModule0: return "module0";
    case Criticality::CriticalModule1: return "module1";
    case Criticality::CriticalComparator: return "comparator";
  }
  return "?";
}

std::optional<Criticality> criticality_from_name(std::string_view s) {
  for (auto c : {Criticality::NotCritical, Criticality::CriticalModule0, Criticality::CriticalModule1,
                 Criticality::CriticalComparator}) {
    if (s == criticality_name(c)) return c;
  }
  return std::nullopt;
}

// --- SensitivityMap ---------------------------------------------------------

SensitivityMap::SensitivityMap(std::vector<Entry> entries) {
  std::erase_if(entries, [](const Entry& e) { return e.criticality == Criticality::NotCritical; });
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.at < b.at; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].at.bit >= kFrameBits) {
      throw RangeError(fmt::format("bit index {} >= {}", entries[i].at.bit, kFrameBits));
    }
    if (i > 0 && entries[i - 1].at == entries[i].at) {
      throw RangeError(fmt::format("duplicate entry for FAR 0x{:08x} bit {}", entries[i].at.far,
                                   entries[i].at.bit));
    }
  }
  entries_ = std::move(entries);
}

Criticality SensitivityMap::classify(Word far, std::size_t bit) const {
  const BitAddress key{far, static_cast<std::uint16_t>(bit)};
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                                   [](const Entry& e, const BitAddress& k) { return e.at < k; });
  return (it != entries_.end() && it->at == key) ? it->criticality : Criticality::NotCritical;
}

std::size_t SensitivityMap::count(Criticality c) const {
  if (c == Criticality::NotCritical) return 0;
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [c](const Entry& e) { return e.criticality == c; }));
}

std::size_t SensitivityMap::count_in_frame(Word far) const {
  const auto lo = std::lower_bound(entries_.begin(), entries_.end(), BitAddress{far, 0},
                                   [](const Entry& e, const BitAddress& k) { return e.at < k; });
  auto hi = lo;
  while (hi != entries_.end() && hi->at.far == far) ++hi;
  return static_cast<std::size_t>(hi - lo);
}

std::string SensitivityMap::to_text() const {
  std::string out = fmt::format("# sensitivity map: {} critical bits\n# far bit class\n", entries_.size());
  for (const Entry& e : entries_) {
    out += fmt::format("{:08x} {} {}\n", e.at.far, e.at.bit, criticality_name(e.criticality));
  }
  return out;
}

SensitivityMap SensitivityMap::parse(std::string_view text) {
  std::vector<Entry> entries;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string far_s, bit_s, cls_s, extra;
    if (!(fields >> far_s)) continue;
    if (!(fields >> bit_s >> cls_s) || (fields >> extra)) {
      throw ParseError(line_no, "expected `FAR_hex bit_index class`");
    }
    Entry e;
    try {
      std::size_t used = 0;
      const unsigned long far = std::stoul(far_s, &used, 16);
      if (used != far_s.size() || far > 0xFFFFFFFFUL) throw std::invalid_argument("far");
      const unsigned long bit = std::stoul(bit_s, &used, 10);
      if (used != bit_s.size() || bit >= kFrameBits) throw std::invalid_argument("bit");
      e.at = {static_cast<Word>(far), static_cast<std::uint16_t>(bit)};
    } catch (const std::logic_error&) {
      throw ParseError(line_no, fmt::format("bad FAR or bit index in '{}'", line));
    }
    const auto c = criticality_from_name(cls_s);
    if (!c) throw ParseError(line_no, fmt::format("unknown class '{}'", cls_s));
    e.criticality = *c;
    entries.push_back(e);
  }
  try {
    return SensitivityMap(std::move(entries));
  } catch (const RangeError& e) {
    throw ParseError(line_no, e.what());
  }
}

SensitivityMap SensitivityMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

void SensitivityMap::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_text();
}

SensitivityMap sensitivity_generate(std::uint64_t seed, std::span<const Word> frames,
                                    std::size_t critical_count, ClassSplit split) {
  const std::uint64_t space = std::uint64_t{frames.size()} * kFrameBits;
  if (critical_count > space) {
    throw RangeError(fmt::format("{} critical bits do not fit in {} frames ({} bits)", critical_count,
                                 frames.size(), space));
  }
  if (split.module0 < 0 || split.module1 < 0 || split.comparator < 0) {
    throw RangeError("class fractions must be non-negative");
  }
  const double total = split.module0 + split.module1 + split.comparator;
  if (critical_count > 0 && total <= 0) throw RangeError("class fractions sum to zero");

  std::size_t n0 = 0;
  std::size_t n1 = 0;
  if (critical_count > 0) {
    const auto share = [&](double f) {
      return static_cast<std::size_t>(std::llround(static_cast<double>(critical_count) * f / total));
    };
    n0 = std::min(critical_count, share(split.module0));
    n1 = std::min(critical_count - n0, share(split.module1));
  }

  // Sparse Fisher-Yates: the first `critical_count` slots of a virtual
  // permutation of [0, space).
  std::mt19937_64 rng(seed);
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  auto value_at = [&swapped](std::uint64_t i) {
    const auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<SensitivityMap::Entry> entries;
  entries.reserve(critical_count);
  for (std::uint64_t i = 0; i < critical_count; ++i) {
    const std::uint64_t j = i + bounded(rng, space - i);
    const std::uint64_t picked = value_at(j);
    swapped[j] = value_at(i);
    const Criticality c = i < n0        ? Criticality::CriticalModule0
                          : i < n0 + n1 ? Criticality::CriticalModule1
                                        : Criticality::CriticalComparator;
    entries.push_back({{frames[picked / kFrameBits], static_cast<std::uint16_t>(picked % kFrameBits)}, c});
  }
  return SensitivityMap(std::move(entries));
}

Block128 fault_mask(Word far, std::size_t bit) {
  // Four xorshift64* rounds; rounds 3 and 4 form the high and low halves.
  std::uint64_t state = (std::uint64_t{far} << 12) | bit;
  xorshift64star(state);
  xorshift64star(state);
  const std::uint64_t hi = xorshift64star(state);
  const std::uint64_t lo = xorshift64star(state) | 1U;
  Block128 m{};
  for (int i = 0; i < 8; ++i) {
    m[i] = static_cast<std::uint8_t>(hi >> (56 - 8 * i));
    m[8 + i] = static_cast<std::uint8_t>(lo >> (56 - 8 * i));
  }
  return m;
}

Block128 widen_input(std::uint8_t input4) {
  const auto nibble = static_cast<std::uint8_t>(input4 & 0xF);
  Block128 b{};
  b.fill(static_cast<std::uint8_t>(nibble << 4 | nibble));
  return b;
}

// --- DesignUnderTest ------------------------------------------------------------

DesignUnderTest::DesignUnderTest(DutConfig config, SensitivityMap map)
    : config_(config), map_(std::move(map)) {
  for (std::uint8_t i = 0; i < 16; ++i) reference_[i] = aes256_encrypt(config_.key, widen_input(i));
}

void DesignUnderTest::capture_golden(const fabric::ConfigEngine& engine) {
  golden_.assign(engine.frames().begin(), engine.frames().end());
}

std::vector<BitAddress> DesignUnderTest::flipped_bits(const fabric::ConfigEngine& engine) const {
  if (golden_.size() != engine.frames().size()) {
    throw std::logic_error("golden image not captured for this device");
  }
  std::vector<BitAddress> out;
  const auto& geometry = engine.geometry();
  for (std::size_t i = 0; i < golden_.size(); ++i) {
    const Frame& now = engine.frame_at(i);
    if (now == golden_[i]) continue;
    const Word far = fabric::far_encode(geometry.at(i));
    for (std::size_t w = 0; w < kFrameWords; ++w) {
      Word diff = now.words[w] ^ golden_[i].words[w];
      while (diff != 0) {
        const int b = std::countr_zero(diff);
        out.push_back({far, static_cast<std::uint16_t>(w * 32 + static_cast<std::size_t>(b))});
        diff &= diff - 1;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

MatchResult DesignUnderTest::run_check(const fabric::ConfigEngine& engine, ControlLines& lines,
                                       std::uint8_t input4) const {
  if (!lines.clk_en) throw DesignHalted("design halted: clock enable (pin 10) is low");
  if (!lines.start_0 || !lines.start_1) {
    throw DesignHalted("start lines (pins 11, 12) not asserted");
  }

  std::optional<BitAddress> lowest[2];
  bool comparator_hit = false;
  for (const BitAddress& a : flipped_bits(engine)) {
    switch (map_.classify(a.far, a.bit)) {
      case Criticality::CriticalModule0:
        if (!lowest[0]) lowest[0] = a;
        break;
      case Criticality::CriticalModule1:
        if (!lowest[1]) lowest[1] = a;
        break;
      case Criticality::CriticalComparator: comparator_hit = true; break;
      case Criticality::NotCritical: break;
    }
  }

  MatchResult r{};
  for (int m = 0; m < 2; ++m) {
    r.outputs[m] = reference_[input4 & 0xF];
    if (lowest[m]) {
      const Block128 mask = fault_mask(lowest[m]->far, lowest[m]->bit);
      for (int i = 0; i < 16; ++i) r.outputs[m][i] ^= mask[i];
    }
  }
  const bool equal = r.outputs[0] == r.outputs[1];
  r.match_line = (comparator_hit || !equal) ? MatchLine::High : MatchLine::Low;
  r.cycles_used = DutConfig::kExecCycles + DutConfig::kCompareCycles;
  lines.match_out = r.match_line == MatchLine::High;
  return r;
}

}  // namespace idfsim::dut
