#include <doctest.h>

#include "idfsim/campaign.hpp"
#include "idfsim/config_protocol.hpp"

using namespace idfsim;
using namespace idfsim::campaign;

namespace {

struct Bench {
  devc::Device device{fabric::DeviceGeometry::desk(), proto::kZedboardIdcode};
  dut::DesignUnderTest dut;
  std::vector<Word> fars;

  explicit Bench(dut::SensitivityMap map = {}, dut::Variant v = dut::Variant::WithIdf)
      : dut({.variant = v}, std::move(map)) {
    device.set_logging(false);
    device.bring_up();
    for (std::size_t i = 0; i < device.engine().geometry().total_frames(); ++i) {
      fars.push_back(fabric::far_encode(device.engine().geometry().at(i)));
    }
  }
};

}  // namespace

TEST_CASE("estimated time") {
  CHECK(estimate_time(64640) == doctest::Approx(440.0));
  CHECK(estimate_time(0) == 0.0);
  CHECK(estimate_time(32320) == doctest::Approx(220.0));
}

TEST_CASE("init needs an initialized device and sets up DRAM") {
  devc::Device raw(fabric::DeviceGeometry::desk(), proto::kZedboardIdcode);
  dut::DesignUnderTest d({}, {});
  Campaign bad(raw, d);
  CHECK_THROWS_AS(bad.init(), devc::SequencingError);

  Bench b;
  b.device.dram().write_word(kErrorCounterAddress, 99);
  Campaign c(b.device, b.dut);
  CHECK_THROWS_AS((void)c.inject_and_check(0, 0, 0), devc::SequencingError);
  c.init();
  CHECK(c.lines().clk_en);
  CHECK(c.error_count() == 0);
  CHECK(c.error_free_count() == 0);
  CHECK(b.device.dram().read_word(kTemplateAddress) == 0xFFFFFFFF);
  CHECK(b.device.dram().read_word(kTemplateAddress + 4 * 3) == 0x30018001);
  CHECK(b.device.dram().read_word(kTemplateAddress + 4 * (kTemplateWords - 1)) == 0x0000000D);
  CHECK(b.dut.has_golden());
}

TEST_CASE("single injection detects and restores") {
  Bench b(dut::SensitivityMap({{{0, 100}, dut::Criticality::CriticalModule1}}));
  Campaign c(b.device, b.dut, {.keep_records = true});
  c.init();
  const auto digest = b.device.engine().snapshot_digest();
  const InjectionRecord hit = c.inject_and_check(0, 3, 4);
  CHECK(hit.detected);
  CHECK(hit.global_bit() == 100);
  CHECK(b.device.engine().snapshot_digest() == digest);
  const InjectionRecord miss = c.inject_and_check(0, 3, 5);
  CHECK_FALSE(miss.detected);
  CHECK(miss.timestamp > hit.timestamp);
  CHECK(c.error_count() == 1);
  CHECK(c.error_free_count() == 1);
  CHECK(c.lines().clk_en);
  CHECK(c.check_design().match_line == dut::MatchLine::Low);
  CHECK_THROWS_AS((void)c.inject_and_check(0, 101, 0), RangeError);
  CHECK_THROWS_AS((void)c.inject_and_check(0, 0, 32), RangeError);
  CHECK_THROWS_AS((void)c.inject_and_check(fabric::far_encode({7, 0, 0, 0, 0}), 0, 0), RangeError);
}

TEST_CASE("injection preserves non-zero frame contents") {
  Bench b;
  Frame f;
  for (std::size_t i = 0; i < kFrameWords; ++i) f.words[i] = static_cast<Word>(i * 0x01010101u);
  const auto seq = proto::build_write_frame_sequence(proto::kZedboardIdcode, b.fars[4], std::span(&f, 1));
  b.device.dram().write_words(0x00400000, seq.words);
  b.device.send_to_pl(0x00400000, seq.words.size());
  Campaign c(b.device, b.dut);
  c.init();
  CHECK(c.read_frame(b.fars[4]) == f);
  (void)c.inject_and_check(b.fars[4], 50, 31);
  CHECK(b.device.engine().frame_at(4) == f);
}

TEST_CASE("manual run covers every bit of a frame") {
  const std::vector<Word> fars{0};
  Bench b(dut::sensitivity_generate(1, fars, 300));
  Campaign c(b.device, b.dut);
  c.init();
  const auto digest = b.device.engine().snapshot_digest();
  const FrameReport r = c.run_manual(0);
  CHECK(r.injections == kFrameBits);
  CHECK(r.critical == 300);
  CHECK(r.non_critical == kFrameBits - 300);
  REQUIRE(r.records.size() == kFrameBits);
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    CHECK(r.records[i].global_bit() == i);
    CHECK(r.records[i].detected == (b.dut.map().classify(0, i) != dut::Criticality::NotCritical));
  }
  CHECK(b.device.engine().snapshot_digest() == digest);
}

TEST_CASE("automatic run and counters") {
  Bench b;
  const std::vector<Word> fars(b.fars.begin(), b.fars.begin() + 3);
  b.dut = dut::DesignUnderTest({}, dut::sensitivity_generate(2, fars, 1234));
  Campaign c(b.device, b.dut);
  c.init();
  const CampaignResult r = c.run_auto(fars);
  CHECK(r.summary.total_injections == 3 * kFrameBits);
  CHECK(r.summary.critical == 1234);
  CHECK(r.summary.non_critical == 3 * kFrameBits - 1234);
  CHECK(r.error_counter_delta == 1234);
  CHECK(c.error_count() == 1234);
  CHECK(r.frames.size() == 3);
  CHECK(r.frames[0].records.empty());
  CHECK(r.summary.estimated_minutes == doctest::Approx(estimate_time(3 * kFrameBits)));
}

TEST_CASE("transfer errors are recorded, skipped and restored") {
  const std::vector<Word> one{0};
  Bench b(dut::sensitivity_generate(3, one, 500));
  std::size_t n = 0;
  b.device.set_transfer_fault_hook([&n](const devc::DmaDescriptor&) { return ++n % 97 == 0; });
  Campaign c(b.device, b.dut);
  c.init();
  const auto digest = b.device.engine().snapshot_digest();
  const CampaignResult r = c.run_auto(one);
  CHECK(r.summary.failed > 0);
  CHECK(r.summary.failed == r.failures.size());
  CHECK(r.summary.total_injections + r.summary.failed == kFrameBits);
  CHECK(r.summary.critical + r.summary.non_critical == r.summary.total_injections);
  CHECK(b.device.engine().snapshot_digest() == digest);
  CHECK(b.device.interface_owner() != devc::Interface::Jtag);

  Bench f(dut::SensitivityMap{});
  f.device.set_transfer_fault_hook([](const devc::DmaDescriptor&) { return true; });
  Campaign strict(f.device, f.dut, {.fail_fast = true});
  strict.init();
  CHECK_THROWS_AS((void)strict.run_auto(one), InjectionError);
}

TEST_CASE("sharded campaign merges to the serial result") {
  Bench b;
  const std::vector<Word> fars(b.fars.begin(), b.fars.begin() + 4);
  b.dut = dut::DesignUnderTest({}, dut::sensitivity_generate(4, fars, 2000));
  b.dut.capture_golden(b.device.engine());
  const CampaignResult sharded = run_sharded(b.device, b.dut, fars, 3);
  Campaign c(b.device, b.dut);
  c.init();
  const CampaignResult serial = c.run_auto(fars);
  CHECK(sharded.summary == serial.summary);
  CHECK(sharded.error_counter_delta == serial.error_counter_delta);
  REQUIRE(sharded.frames.size() == serial.frames.size());
  for (std::size_t i = 0; i < fars.size(); ++i) CHECK(sharded.frames[i].critical == serial.frames[i].critical);
}

TEST_CASE("summary merge is associative and commutative") {
  const CampaignSummary a{dut::Variant::WithIdf, 10, 7, 3, 0, 0};
  const CampaignSummary b{dut::Variant::WithIdf, 20, 5, 15, 1, 0};
  const CampaignSummary c{dut::Variant::WithIdf, 5, 5, 0, 0, 0};
  CHECK(a.merge(b).merge(c) == a.merge(b.merge(c)));
  CHECK(a.merge(b) == b.merge(a));
  CHECK(a.merge(b).merge(c).total_injections == 35);
}

TEST_CASE("report formats") {
  const std::vector<CampaignSummary> rows{{dut::Variant::WithIdf, 64640, 38729, 25911, 0, 440},
                                          {dut::Variant::WithoutIdf, 64640, 37916, 26724, 0, 440}};
  const std::string text = summary_text(rows);
  CHECK(text.find("Frame Errors (With IDF)") != std::string::npos);
  CHECK(text.find("Frame Errors (Without IDF)") != std::string::npos);
  CHECK(text.find("38729") != std::string::npos);
  CHECK(summary_csv(rows) ==
        "variant,total_injections,non_critical,critical,failed,estimated_minutes\n"
        "idf,64640,38729,25911,0,440.00\n"
        "noidf,64640,37916,26724,0,440.00\n");
  FrameReport fr;
  fr.far = 0x80;
  fr.injections = 3232;
  fr.critical = 2;
  fr.non_critical = 3230;
  CHECK(frames_csv(std::vector<FrameReport>{fr}) == "far,injections,critical,non_critical\n0x00000080,3232,2,3230\n");
}
