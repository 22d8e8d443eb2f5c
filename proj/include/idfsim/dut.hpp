#pragma once

// Behavioral model of the design under test: two redundant AES-256 cores
// feeding a comparator, driven by PS GPIO control lines. Configuration bits
// corrupt the design only through a SensitivityMap.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idfsim/fabric.hpp"

namespace idfsim::dut {

using Block128 = std::array<std::uint8_t, 16>;
using Key256 = std::array<std::uint8_t, 32>;

/// FIPS-197 AES-256, single block.
[[nodiscard]] Block128 aes256_encrypt(const Key256& key, const Block128& block);

[[nodiscard]] Block128 block_from_hex(std::string_view hex);
[[nodiscard]] std::string to_hex(std::span<const std::uint8_t> bytes);

enum class Variant : std::uint8_t { WithIdf, WithoutIdf };
[[nodiscard]] const char* variant_name(Variant v);

struct DutConfig {
  static constexpr int kExecCycles = 11;
  static constexpr int kCompareCycles = 2;
  static constexpr int kClockMhz = 50;

  Key256 key = default_key();
  Variant variant = Variant::WithIdf;

  static constexpr Key256 default_key() {
    Key256 k{};
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<std::uint8_t>(i);
    return k;
  }
};

// PS GPIO pin numbers.
inline constexpr int kPinClockEnable = 10;
inline constexpr int kPinStart0 = 11;
inline constexpr int kPinStart1 = 12;
inline constexpr int kPinMatch = 13;

struct ControlLines {
  bool clk_en = false;
  bool start_0 = false;
  bool start_1 = false;
  bool match_out = false;  // high = mismatch
};

enum class Criticality : std::uint8_t {
  NotCritical,
  CriticalModule0,
  CriticalModule1,
  CriticalComparator,
};
[[nodiscard]] const char* criticality_name(Criticality c);
[[nodiscard]] std::optional<Criticality> criticality_from_name(std::string_view s);

struct BitAddress {
  Word far = 0;
  std::uint16_t bit = 0;  // 0..3231, word_index * 32 + bit_in_word

  auto operator<=>(const BitAddress&) const = default;
};

/// (FAR, bit) -> criticality. Unlisted bits are NotCritical.
class SensitivityMap {
 public:
  struct Entry {
    BitAddress at;
    Criticality criticality;
    bool operator==(const Entry&) const = default;
  };

  SensitivityMap() = default;
  explicit SensitivityMap(std::vector<Entry> entries);

  [[nodiscard]] Criticality classify(Word far, std::size_t bit) const;
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] std::size_t count(Criticality c) const;
  [[nodiscard]] std::size_t count_in_frame(Word far) const;
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }

  /// `FAR_hex bit_index class` lines, sorted; `#` comments.
  [[nodiscard]] std::string to_text() const;
  static SensitivityMap parse(std::string_view text);
  static SensitivityMap load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const SensitivityMap&) const = default;

 private:
  std::vector<Entry> entries_;  // sorted by address, unique, never NotCritical
};

struct ClassSplit {
  double module0 = 0.5;
  double module1 = 0.5;
  double comparator = 0.0;
};

/// Seeded draw of exactly `critical_count` distinct critical bits over `frames`.
[[nodiscard]] SensitivityMap sensitivity_generate(std::uint64_t seed, std::span<const Word> frames,
                                                  std::size_t critical_count, ClassSplit split = {});

/// Deterministic nonzero 128-bit corruption pattern for a flipped bit.
[[nodiscard]] Block128 fault_mask(Word far, std::size_t bit);

enum class MatchLine : std::uint8_t { Low, High };

struct MatchResult {
  MatchLine match_line;
  std::array<Block128, 2> outputs;
  int cycles_used;
};

class DesignHalted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 4-bit input replicated across the 128-bit block.
[[nodiscard]] Block128 widen_input(std::uint8_t input4);

class DesignUnderTest {
 public:
  DesignUnderTest(DutConfig config, SensitivityMap map);

  /// Records the configuration that counts as fault-free.
  void capture_golden(const fabric::ConfigEngine& engine);
  [[nodiscard]] bool has_golden() const { return !golden_.empty(); }

  /// Configuration bits that differ from the golden image, in (FAR, bit) order.
  [[nodiscard]] std::vector<BitAddress> flipped_bits(const fabric::ConfigEngine& engine) const;

  /// Runs one encryption on both modules and compares. Requires clk_en high
  /// and both starts asserted; drives lines.match_out.
  MatchResult run_check(const fabric::ConfigEngine& engine, ControlLines& lines, std::uint8_t input4) const;

  [[nodiscard]] const DutConfig& config() const { return config_; }
  [[nodiscard]] const SensitivityMap& map() const { return map_; }

 private:
  DutConfig config_;
  SensitivityMap map_;
  std::vector<Frame> golden_;
  std::array<Block128, 16> reference_{};
};

}  // namespace idfsim::dut
