#pragma once

// Fault-injection campaigns driven from "PS software": every read, flip and
// restore goes through DRAM and PCAP transfers, exactly as on the board.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "idfsim/devc.hpp"
#include "idfsim/dut.hpp"

namespace idfsim::campaign {

using devc::Address;

inline constexpr Address kReadbackCommandAddress = 0x00100000;
inline constexpr Address kTemplateAddress = 0x00200000;
inline constexpr Address kReadbackBufferAddress = 0x00300000;
inline constexpr Address kErrorCounterAddress = 0xFFFF0000;
inline constexpr Address kErrorFreeCounterAddress = 0xFFFF0008;

// Word offsets inside the single-frame write template.
inline constexpr std::size_t kTemplateFarOffset = 6;
inline constexpr std::size_t kTemplateDataOffset = 11;
inline constexpr std::size_t kTemplateWords = kTemplateDataOffset + 2 * kFrameWords + 2;

inline constexpr std::uint64_t kReferenceInjections = 64640;
inline constexpr double kReferenceMinutes = 440.0;

/// Linear projection at the reference rate (440 min per 64640 injections).
[[nodiscard]] double estimate_time(std::uint64_t injections,
                                   double minutes_per_64640 = kReferenceMinutes);

struct InjectionRecord {
  Word far = 0;
  std::uint8_t word_index = 0;         // 0..100
  std::uint8_t bit_index_in_word = 0;  // 0..31
  bool detected = false;
  std::uint64_t timestamp = 0;

  [[nodiscard]] std::size_t global_bit() const { return std::size_t{word_index} * 32 + bit_index_in_word; }
};

struct InjectionFailure {
  Word far = 0;
  std::uint8_t word_index = 0;
  std::uint8_t bit_index_in_word = 0;
  std::string message;
};

class InjectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameReport {
  Word far = 0;
  std::uint64_t injections = 0;
  std::uint64_t critical = 0;
  std::uint64_t non_critical = 0;
  std::vector<InjectionRecord> records;
  std::vector<InjectionFailure> failures;
};

struct CampaignSummary {
  dut::Variant variant = dut::Variant::WithIdf;
  std::uint64_t total_injections = 0;
  std::uint64_t non_critical = 0;
  std::uint64_t critical = 0;
  std::uint64_t failed = 0;  // aborted by a transfer error; not part of the total
  double estimated_minutes = 0;

  /// Associative and commutative; estimated time is recomputed from the total.
  [[nodiscard]] CampaignSummary merge(const CampaignSummary& other) const;
  bool operator==(const CampaignSummary&) const = default;
};

struct CampaignResult {
  CampaignSummary summary;
  std::vector<FrameReport> frames;
  std::vector<InjectionFailure> failures;
  std::uint64_t error_counter_delta = 0;
  std::uint64_t error_free_counter_delta = 0;
};

struct CampaignOptions {
  bool fail_fast = false;
  bool keep_records = false;   // campaign_auto only; manual runs always keep them
  std::uint8_t input4 = 0x5;   // DUT stimulus for every check
};

class Campaign {
 public:
  Campaign(devc::Device& device, dut::DesignUnderTest& dut, CampaignOptions options = {});

  /// Loads the frame template, zeroes the counters and enables the DUT clock.
  /// Captures the DUT golden image if none is set.
  void init();
  [[nodiscard]] bool initialized() const { return initialized_; }

  /// Replaces the DRAM template with a single-frame write sequence loaded from disk.
  void load_template_file(const std::string& path);

  InjectionRecord inject_and_check(Word far, unsigned word_index, unsigned bit);
  FrameReport run_manual(Word far);
  CampaignResult run_auto(std::span<const Word> fars);

  /// Reads one frame through PCAP into the read-back buffer and returns it.
  Frame read_frame(Word far);
  /// Writes the frame currently held in the DRAM template to `far`.
  void write_template_frame(Word far);
  dut::MatchResult check_design();

  [[nodiscard]] Word error_count() const;
  [[nodiscard]] Word error_free_count() const;
  [[nodiscard]] dut::ControlLines& lines() { return lines_; }
  [[nodiscard]] const CampaignOptions& options() const { return options_; }

 private:
  void require_initialized() const;
  void validate_far(Word far) const;
  void bump(Address counter);
  FrameReport run_frame(Word far, bool keep_records, std::vector<InjectionFailure>* failures);

  devc::Device& device_;
  dut::DesignUnderTest& dut_;
  CampaignOptions options_;
  dut::ControlLines lines_;
  bool initialized_ = false;
  std::uint64_t clock_ = 0;
};

/// Splits `fars` into `shards` contiguous ranges, runs each on an independent
/// copy of `prototype` (already initialized for campaigns) and merges.
[[nodiscard]] CampaignResult run_sharded(const devc::Device& prototype, const dut::DesignUnderTest& dut,
                                         std::span<const Word> fars, unsigned shards,
                                         CampaignOptions options = {});

/// Table-style summary block.
[[nodiscard]] std::string summary_text(std::span<const CampaignSummary> rows);
/// `variant,total_injections,non_critical,critical,failed,estimated_minutes`
[[nodiscard]] std::string summary_csv(std::span<const CampaignSummary> rows);
/// `far,injections,critical,non_critical`
[[nodiscard]] std::string frames_csv(std::span<const FrameReport> frames);

}  // namespace idfsim::campaign
