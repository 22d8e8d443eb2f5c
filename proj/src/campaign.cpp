#include "idfsim/campaign.hpp"

#include <fmt/format.h>

#include <thread>

#include "idfsim/config_protocol.hpp"

namespace idfsim::campaign {

namespace {

constexpr Address kFooterAddress = kReadbackCommandAddress + 0x400;
constexpr int kRestoreAttempts = 3;

}  // namespace

double estimate_time(std::uint64_t injections, double minutes_per_64640) {
  return static_cast<double>(injections) * (minutes_per_64640 / static_cast<double>(kReferenceInjections));
}

CampaignSummary CampaignSummary::merge(const CampaignSummary& other) const {
  CampaignSummary m = *this;
  m.total_injections += other.total_injections;
  m.non_critical += other.non_critical;
  m.critical += other.critical;
  m.failed += other.failed;
  m.estimated_minutes = estimate_time(m.total_injections);
  return m;
}

Campaign::Campaign(devc::Device& device, dut::DesignUnderTest& dut, CampaignOptions options)
    : device_(device), dut_(dut), options_(options) {}

void Campaign::init() {
  if (device_.phase() != devc::InitPhase::CfgDone) {
    throw devc::SequencingError("campaign init: device not initialized");
  }
  const Frame blank{};
  const auto tmpl = proto::build_write_frame_sequence(
      device_.engine().device_id(), fabric::far_encode(device_.engine().geometry().first()),
      std::span(&blank, 1));
  auto& dram = device_.dram();
  dram.write_words(kTemplateAddress, tmpl.words);
  dram.write_words(kFooterAddress, proto::build_desync_footer().words);
  dram.write_word(kErrorCounterAddress, 0);
  dram.write_word(kErrorFreeCounterAddress, 0);
  lines_.clk_en = true;
  if (!dut_.has_golden()) dut_.capture_golden(device_.engine());
  initialized_ = true;
}

void Campaign::load_template_file(const std::string& path) {
  const auto words = proto::read_sequence_file(path);
  if (words.size() != kTemplateWords) {
    throw std::runtime_error(fmt::format("{}: template must be {} words, got {}", path, kTemplateWords,
                                         words.size()));
  }
  const auto packets = proto::decode_stream(words);
  (void)packets;
  device_.dram().write_words(kTemplateAddress, words);
}

void Campaign::require_initialized() const {
  if (!initialized_) throw devc::SequencingError("campaign not initialized");
}

void Campaign::validate_far(Word far) const {
  const fabric::FarFields f = fabric::far_decode(far);
  if (!device_.engine().geometry().contains(f)) {
    throw RangeError(fmt::format("FAR 0x{:08x} is not part of geometry '{}'", far,
                                 device_.engine().geometry().name()));
  }
}

Word Campaign::error_count() const { return device_.dram().read_word(kErrorCounterAddress); }
Word Campaign::error_free_count() const { return device_.dram().read_word(kErrorFreeCounterAddress); }

void Campaign::bump(Address counter) {
  device_.dram().write_word(counter, device_.dram().read_word(counter) + 1);
}

Frame Campaign::read_frame(Word far) {
  require_initialized();
  validate_far(far);
  auto& dram = device_.dram();
  const auto request = proto::build_readback_sequence(far, 1);
  dram.write_words(kReadbackCommandAddress, request.words);
  device_.send_to_pl(kReadbackCommandAddress, request.words.size());
  std::exception_ptr receive_error;
  try {
    device_.receive_from_pl(kReadbackBufferAddress, proto::frame_transfer_words(1));
  } catch (const devc::TransferError&) {
    receive_error = std::current_exception();
  }
  // The request leaves the engine synced; release it with a third transfer
  // even when the receive failed, or every later sequence would be rejected.
  const std::size_t footer_words = proto::build_desync_footer().words.size();
  for (int attempt = 1;; ++attempt) {
    try {
      device_.send_to_pl(kFooterAddress, footer_words);
      break;
    } catch (const devc::TransferError&) {
      if (attempt == kRestoreAttempts) throw;
    }
  }
  if (receive_error) std::rethrow_exception(receive_error);
  Frame f;
  const auto words = dram.read_words(kReadbackBufferAddress + 4 * kFrameWords, kFrameWords);
  std::copy(words.begin(), words.end(), f.words.begin());
  return f;
}

void Campaign::write_template_frame(Word far) {
  require_initialized();
  validate_far(far);
  device_.dram().write_word(kTemplateAddress + 4 * kTemplateFarOffset, far);
  device_.send_to_pl(kTemplateAddress, kTemplateWords);
}

dut::MatchResult Campaign::check_design() {
  lines_.start_0 = lines_.start_1 = true;
  try {
    const dut::MatchResult r = dut_.run_check(device_.engine(), lines_, options_.input4);
    lines_.start_0 = lines_.start_1 = false;
    return r;
  } catch (...) {
    lines_.start_0 = lines_.start_1 = false;
    throw;
  }
}

InjectionRecord Campaign::inject_and_check(Word far, unsigned word_index, unsigned bit) {
  require_initialized();
  validate_far(far);
  if (word_index >= kFrameWords || bit >= 32) {
    throw RangeError(fmt::format("bit position word {} bit {} outside the frame", word_index, bit));
  }
  auto& dram = device_.dram();
  const Address data = kTemplateAddress + 4 * kTemplateDataOffset;
  const Address target = data + 4 * static_cast<Address>(word_index);
  const Word flip = Word{1} << bit;

  InjectionRecord rec;
  rec.far = far;
  rec.word_index = static_cast<std::uint8_t>(word_index);
  rec.bit_index_in_word = static_cast<std::uint8_t>(bit);

  auto restore = [&](const Frame& original) -> std::string {
    std::string last_error;
    for (int attempt = 0; attempt < kRestoreAttempts; ++attempt) {
      try {
        lines_.clk_en = false;
        dram.write_words(data, original.words);
        device_.send_to_pl(kTemplateAddress, kTemplateWords);
        lines_.clk_en = true;
        return {};
      } catch (const devc::DevcError& e) {
        last_error = e.what();
      }
    }
    lines_.clk_en = true;
    return last_error;
  };

  lines_.clk_en = false;
  Frame original;
  bool have_original = false;
  try {
    original = read_frame(far);
    have_original = true;
    dram.write_word(kTemplateAddress + 4 * kTemplateFarOffset, far);
    dram.write_words(data, original.words);
    dram.write_word(target, dram.read_word(target) ^ flip);
    device_.send_to_pl(kTemplateAddress, kTemplateWords);
    lines_.clk_en = true;
    rec.detected = check_design().match_line == dut::MatchLine::High;
  } catch (const devc::DevcError& e) {
    std::string msg = fmt::format("FAR 0x{:08x} word {} bit {}: {}", far, word_index, bit, e.what());
    if (have_original) {
      if (const std::string err = restore(original); !err.empty()) msg += "; restore failed: " + err;
    } else {
      lines_.clk_en = true;
    }
    throw InjectionError(msg);
  }

  if (const std::string err = restore(original); !err.empty()) {
    throw InjectionError(fmt::format("FAR 0x{:08x} word {} bit {}: restore failed: {}", far, word_index,
                                     bit, err));
  }
  bump(rec.detected ? kErrorCounterAddress : kErrorFreeCounterAddress);
  rec.timestamp = clock_++;
  return rec;
}

FrameReport Campaign::run_frame(Word far, bool keep_records, std::vector<InjectionFailure>* failures) {
  FrameReport report;
  report.far = far;
  if (keep_records) report.records.reserve(kFrameBits);
  for (unsigned w = 0; w < kFrameWords; ++w) {
    for (unsigned b = 0; b < 32; ++b) {
      try {
        const InjectionRecord rec = inject_and_check(far, w, b);
        ++report.injections;
        ++(rec.detected ? report.critical : report.non_critical);
        if (keep_records) report.records.push_back(rec);
      } catch (const InjectionError& e) {
        if (options_.fail_fast) throw;
        InjectionFailure f{far, static_cast<std::uint8_t>(w), static_cast<std::uint8_t>(b), e.what()};
        report.failures.push_back(f);
        if (failures != nullptr) failures->push_back(std::move(f));
      }
    }
  }
  return report;
}

FrameReport Campaign::run_manual(Word far) {
  require_initialized();
  validate_far(far);
  return run_frame(far, true, nullptr);
}

CampaignResult Campaign::run_auto(std::span<const Word> fars) {
  require_initialized();
  for (Word far : fars) validate_far(far);

  CampaignResult result;
  result.summary.variant = dut_.config().variant;
  const Word errors_before = error_count();
  const Word clean_before = error_free_count();
  for (Word far : fars) {
    FrameReport fr = run_frame(far, options_.keep_records, &result.failures);
    result.summary.total_injections += fr.injections;
    result.summary.critical += fr.critical;
    result.summary.non_critical += fr.non_critical;
    result.summary.failed += fr.failures.size();
    result.frames.push_back(std::move(fr));
  }
  result.summary.estimated_minutes = estimate_time(result.summary.total_injections);
  result.error_counter_delta = error_count() - errors_before;
  result.error_free_counter_delta = error_free_count() - clean_before;
  return result;
}

CampaignResult run_sharded(const devc::Device& prototype, const dut::DesignUnderTest& dut,
                           std::span<const Word> fars, unsigned shards, CampaignOptions options) {
  shards = std::max(1U, std::min<unsigned>(shards, static_cast<unsigned>(std::max<std::size_t>(fars.size(), 1))));
  struct Shard {
    devc::Device device;
    dut::DesignUnderTest dut;
    std::span<const Word> fars;
    CampaignResult result;
    std::exception_ptr error;
  };
  std::vector<Shard> work;
  work.reserve(shards);
  const std::size_t per = (fars.size() + shards - 1) / shards;
  for (unsigned s = 0; s < shards; ++s) {
    const std::size_t begin = std::min(fars.size(), s * per);
    const std::size_t end = std::min(fars.size(), begin + per);
    work.push_back({prototype, dut, fars.subspan(begin, end - begin), {}, nullptr});
  }
  {
    std::vector<std::jthread> threads;
    for (Shard& sh : work) {
      threads.emplace_back([&sh, options] {
        try {
          Campaign c(sh.device, sh.dut, options);
          c.init();
          sh.result = c.run_auto(sh.fars);
        } catch (...) {
          sh.error = std::current_exception();
        }
      });
    }
  }
  CampaignResult merged;
  merged.summary.variant = dut.config().variant;
  for (Shard& sh : work) {
    if (sh.error) std::rethrow_exception(sh.error);
    merged.summary = merged.summary.merge(sh.result.summary);
    merged.error_counter_delta += sh.result.error_counter_delta;
    merged.error_free_counter_delta += sh.result.error_free_counter_delta;
    std::move(sh.result.frames.begin(), sh.result.frames.end(), std::back_inserter(merged.frames));
    std::move(sh.result.failures.begin(), sh.result.failures.end(), std::back_inserter(merged.failures));
  }
  merged.summary.estimated_minutes = estimate_time(merged.summary.total_injections);
  return merged;
}

std::string summary_text(std::span<const CampaignSummary> rows) {
  std::string out = fmt::format("{:<28}  {:>16}  {:>17}  {:>13}  {:>18}\n", "Injection Type",
                                "Total Injections", "Non-critical bits", "Critical bits",
                                "Testing Time (min)");
  for (const CampaignSummary& s : rows) {
    const std::string label = fmt::format("Frame Errors ({})",
                                          s.variant == dut::Variant::WithIdf ? "With IDF" : "Without IDF");
    out += fmt::format("{:<28}  {:>16}  {:>17}  {:>13}  {:>18.0f}\n", label, s.total_injections,
                       s.non_critical, s.critical, s.estimated_minutes);
    if (s.failed > 0) out += fmt::format("  ({} injections aborted by transfer errors)\n", s.failed);
  }
  return out;
}

std::string summary_csv(std::span<const CampaignSummary> rows) {
  std::string out = "variant,total_injections,non_critical,critical,failed,estimated_minutes\n";
  for (const CampaignSummary& s : rows) {
    out += fmt::format("{},{},{},{},{},{:.2f}\n", dut::variant_name(s.variant), s.total_injections,
                       s.non_critical, s.critical, s.failed, s.estimated_minutes);
  }
  return out;
}

std::string frames_csv(std::span<const FrameReport> frames) {
  std::string out = "far,injections,critical,non_critical\n";
  for (const FrameReport& f : frames) {
    out += fmt::format("0x{:08x},{},{},{}\n", f.far, f.injections, f.critical, f.non_critical);
  }
  return out;
}

}  // namespace idfsim::campaign
