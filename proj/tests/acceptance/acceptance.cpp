// One PASS/FAIL line per acceptance criterion. With no arguments every
// criterion runs; otherwise only the listed criterion numbers.

#include <fmt/core.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "idfsim/campaign.hpp"
#include "idfsim/cli.hpp"
#include "idfsim/config_protocol.hpp"
#include "idfsim/devc.hpp"
#include "idfsim/dut.hpp"
#include "idfsim/fabric.hpp"
#include "idfsim/idf.hpp"
#include "idfsim/utilization.hpp"
#include "support/oracles.hpp"

using namespace idfsim;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    if (ok) detail = what;
    else if (detail.size() < 600) detail += "; " + what;
    ok = false;
  }
};

struct Criterion {
  int id;
  std::string title;
  double limit_s;
  std::function<Verdict()> run;
};

std::vector<Word> cli_words(std::vector<std::string> args, int& rc) {
  std::istringstream in;
  std::ostringstream out, err;
  rc = cli::run(std::move(args), in, out, err);
  std::istringstream ls(out.str());
  std::vector<Word> words;
  std::string tok;
  while (ls >> tok) words.push_back(static_cast<Word>(std::stoul(tok, nullptr, 16)));
  return words;
}

std::vector<Word> first_fars(const fabric::DeviceGeometry& g, std::size_t n) {
  std::vector<Word> fars;
  for (std::size_t i = 0; i < n; ++i) fars.push_back(fabric::far_encode(g.at(i)));
  return fars;
}

// ---------------------------------------------------------------------------

Verdict golden_sequences() {
  Verdict v;
  // Write listing with the placeholders filled in: IDCODE, FAR 0, one frame of
  // all-ones data, then the flush frame.
  const auto dump = std::filesystem::temp_directory_path() / "idfsim_acc_ones.bin";
  Frame ones;
  ones.words.fill(0xFFFFFFFF);
  fabric::write_frame_dump(dump.string(), std::span(&ones, 1));
  int rc = 0;
  const auto write = cli_words(
      {"encode-write-frame", "--far", "0x00000000", "--idcode", "0x23727093", "--data", dump.string()}, rc);
  std::filesystem::remove(dump);
  std::vector<Word> expected{0xFFFFFFFF, 0xAA995566, 0x20000000, 0x30018001, 0x23727093, 0x30002001,
                             0x00000000, 0x30008001, 0x00000001, 0x30004000, oracle::type2(2, 202)};
  expected.insert(expected.end(), 101, 0xFFFFFFFF);
  expected.insert(expected.end(), 101, 0x00000000);
  expected.push_back(0x30008001);
  expected.push_back(0x0000000D);
  v.expect(rc == 0, "encode-write-frame failed");
  v.expect(write == expected, fmt::format("write sequence differs ({} words)", write.size()));

  auto listing = oracle::read_hex_words(oracle::fixture("readback_7k325t.txt"));
  // The listing prints three NOOPs as 02000000; a type-1 NOOP is 20000000.
  for (Word& w : listing) {
    if (w == 0x02000000) w = 0x20000000;
  }
  const auto rb = cli_words({"encode-readback", "--far", "0x00000000", "--words", "2860321"}, rc);
  v.expect(rc == 0, "encode-readback failed");
  v.expect(rb == listing, "read-back sequence differs from the listing");
  v.expect(rb.size() > 23 && rb[22] == 0x28006000 && rb[23] == 0x482BA521, "FDRO read headers");
  v.expect(rb.size() >= 5 && std::vector<Word>(rb.begin(), rb.begin() + 5) ==
                                 std::vector<Word>{0xFFFFFFFF, 0x000000BB, 0x11220044, 0xFFFFFFFF, 0xAA995566},
           "preamble");
  const auto footer = cli_words({"encode-footer"}, rc);
  v.expect(footer == oracle::read_hex_words(oracle::fixture("desync_footer.txt")), "footer differs");
  v.expect(footer.size() == 16, "footer length");
  return v;
}

Verdict codec_roundtrip() {
  Verdict v;
  std::mt19937_64 rng(0x1D5);
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto packets = oracle::random_packets(rng);
    try {
      if (proto::decode_stream(proto::encode(packets)) != packets) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  v.expect(failures == 0, fmt::format("{} of 10000 lists did not round-trip", failures));
  if (v.ok) v.detail = "10000 lists";
  return v;
}

Verdict fabric_identity() {
  Verdict v;
  const auto g = fabric::DeviceGeometry::desk();
  fabric::ConfigEngine e(g, proto::kZedboardIdcode);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < g.total_frames(); ++i) {
    Frame f;
    for (std::size_t w = 0; w < kFrameWords; ++w) f.words[w] = static_cast<Word>((i + 1) * 0x9E3779B9u ^ (w * 0x85EBCA6Bu));
    const Word far = fabric::far_encode(g.at(i));
    const bool written = e.execute(proto::build_write_frame_sequence(proto::kZedboardIdcode, far, std::span(&f, 1)).words).ok();
    const auto rb = e.execute(proto::build_readback_sequence(far, 1).words);
    (void)e.execute(proto::build_desync_footer().words);
    if (!written || !rb.ok() || rb.readback.size() != 2 * kFrameWords ||
        !std::equal(f.words.begin(), f.words.end(), rb.readback.begin() + kFrameWords)) {
      ++mismatched;
    }
  }
  v.expect(mismatched == 0, fmt::format("{} of {} frames did not read back", mismatched, g.total_frames()));

  // Flip and restore every bit of one frame through the full PCAP path.
  devc::Device device(g, proto::kZedboardIdcode);
  device.set_logging(false);
  device.bring_up();
  dut::DesignUnderTest d({}, {});
  campaign::Campaign c(device, d);
  c.init();
  const Word far = fabric::far_encode(g.at(5));
  const auto digest = device.engine().snapshot_digest();
  std::size_t drifted = 0;
  for (unsigned w = 0; w < kFrameWords; ++w) {
    for (unsigned b = 0; b < 32; ++b) {
      (void)c.inject_and_check(far, w, b);
      if (device.engine().snapshot_digest() != digest) ++drifted;
    }
  }
  v.expect(drifted == 0, fmt::format("{} of 3232 flips left the digest changed", drifted));
  if (v.ok) v.detail = fmt::format("{} frames, 3232 flips", g.total_frames());
  return v;
}

Verdict dma_rules() {
  Verdict v;
  devc::Device d(fabric::DeviceGeometry::desk(), proto::kZedboardIdcode);
  d.set_logging(false);
  d.bring_up();
  auto request = [&](std::size_t n) {
    const auto seq = proto::build_readback_sequence(0, n);
    d.dram().write_words(0x00100000, seq.words);
    d.send_to_pl(0x00100000, seq.words.size());
  };
  auto footer = [&] {
    const auto f = proto::build_desync_footer();
    d.dram().write_words(0x00180000, f.words);
    d.send_to_pl(0x00180000, f.words.size());
  };
  auto kind_of = [&](std::size_t words) -> std::optional<devc::TransferErrorKind> {
    try {
      d.receive_from_pl(0x00300000, words);
      return std::nullopt;
    } catch (const devc::TransferError& e) {
      return e.kind();
    }
  };
  // Ten frames: nine requested plus the leading buffer frame.
  d.set_pcap_clock_divisor(4);
  request(9);
  v.expect(proto::frame_transfer_words(9) == 1010, "10-frame transfer is not 1010 words");
  v.expect(!kind_of(1010).has_value(), "10-frame read-back failed");
  footer();

  request(10);
  const auto digest = d.engine().snapshot_digest();
  const auto dram_before = d.dram().read_words(0x00300000, 1111);
  v.expect(kind_of(1111) == devc::TransferErrorKind::BoundaryViolation, "11-frame read did not raise a boundary error");
  v.expect(d.engine().snapshot_digest() == digest, "11-frame read changed configuration memory");
  v.expect(d.dram().read_words(0x00300000, 1111) == dram_before, "11-frame read changed DRAM");
  footer();

  d.set_pcap_clock_divisor(1);
  request(2);
  v.expect(kind_of(303) == devc::TransferErrorKind::FifoOverflow, "multi-frame read at divisor 1 did not overflow");
  d.set_pcap_clock_divisor(4);
  v.expect(!kind_of(303).has_value(), "multi-frame read at divisor 4 failed");
  v.expect(d.pcap_clock_mhz() == 25.0, "divisor 4 is not 25 MHz");
  return v;
}

Verdict arbitration() {
  Verdict v;
  devc::Device d(fabric::DeviceGeometry::desk(), proto::kZedboardIdcode);
  d.bring_up();
  const std::size_t start = d.event_log().size();
  // PCAP takes the engine with a read-back request, which leaves it synced.
  const auto seq = proto::build_readback_sequence(0, 1);
  d.dram().write_words(0x00100000, seq.words);
  d.send_to_pl(0x00100000, seq.words.size());
  (void)d.interface_acquire(devc::Interface::Jtag);
  (void)d.interface_acquire(devc::Interface::Rbcrc);
  (void)d.interface_release_on_desync();
  (void)d.interface_acquire(devc::Interface::Rbcrc);
  std::vector<std::string> trace;
  for (std::size_t i = start; i < d.event_log().size(); ++i) {
    const std::string& line = d.event_log()[i];
    if (line.find("\tarbiter\t") == std::string::npos) continue;
    trace.push_back(line.substr(line.find('\t', line.find("\tarbiter\t") + 9) + 1));
  }
  const std::vector<std::string> expected{
      "granted requester=PCAP previous=NONE",  "preempted requester=JTAG previous=PCAP",
      "ignored requester=RBCRC previous=JTAG", "released requester=JTAG previous=JTAG",
      "granted requester=RBCRC previous=NONE",
  };
  std::string got;
  for (const auto& t : trace) got += (got.empty() ? "" : " | ") + t;
  v.expect(trace == expected, "trace: " + got);
  return v;
}

struct CampaignRun {
  campaign::CampaignSummary summary;
  Word error_counter = 0;
  Word error_free_counter = 0;
};

CampaignRun run_campaign(dut::Variant variant, std::size_t critical, std::uint64_t seed) {
  const auto g = fabric::DeviceGeometry::desk();
  const auto fars = first_fars(g, 20);
  devc::Device device(g, proto::kZedboardIdcode);
  device.set_logging(false);
  device.bring_up();
  dut::DesignUnderTest d({.variant = variant}, dut::sensitivity_generate(seed, fars, critical));
  campaign::Campaign c(device, d);
  c.init();
  const auto r = c.run_auto(fars);
  return {r.summary, c.error_count(), c.error_free_count()};
}

const std::pair<CampaignRun, CampaignRun>& campaigns() {
  static const auto runs = std::make_pair(run_campaign(dut::Variant::WithIdf, 25911, 1),
                                          run_campaign(dut::Variant::WithoutIdf, 26724, 2));
  return runs;
}

Verdict campaign_reproduction() {
  Verdict v;
  const auto& [idf, noidf] = campaigns();
  auto check = [&](const char* name, const CampaignRun& r, std::uint64_t crit, std::uint64_t noncrit) {
    v.expect(r.summary.total_injections == 64640, fmt::format("{} total {}", name, r.summary.total_injections));
    v.expect(r.summary.critical == crit, fmt::format("{} critical {}", name, r.summary.critical));
    v.expect(r.summary.non_critical == noncrit, fmt::format("{} non-critical {}", name, r.summary.non_critical));
    v.expect(r.summary.failed == 0, fmt::format("{} failed {}", name, r.summary.failed));
    v.expect(r.error_counter == crit && r.error_free_counter == noncrit,
             fmt::format("{} DRAM counters {}/{}", name, r.error_counter, r.error_free_counter));
    v.expect(r.summary.estimated_minutes == 440.0, fmt::format("{} time {}", name, r.summary.estimated_minutes));
  };
  check("IDF", idf, 25911, 38729);
  check("non-IDF", noidf, 26724, 37916);
  if (v.ok) v.detail = "64640 injections, 25911/38729 and 26724/37916, 440 min";
  return v;
}

Verdict derived_comparison() {
  Verdict v;
  const auto& [idf, noidf] = campaigns();
  const auto diff = static_cast<long long>(noidf.summary.critical) - static_cast<long long>(idf.summary.critical);
  const double reduction = 100.0 * static_cast<double>(diff) / static_cast<double>(noidf.summary.critical);
  v.expect(diff == 813, fmt::format("difference {}", diff));
  v.expect(std::abs(reduction - 3.0) <= 0.1, fmt::format("reduction {:.2f}%", reduction));
  if (v.ok) v.detail = fmt::format("{} bits, {:.2f}%", diff, reduction);
  return v;
}

Verdict dmr_properties() {
  Verdict v;
  const auto g = fabric::DeviceGeometry::desk();
  fabric::ConfigEngine e(g, proto::kZedboardIdcode);
  const auto fars = first_fars(g, 4);
  const auto map = dut::sensitivity_generate(11, fars, 400);
  dut::DesignUnderTest d({}, map);
  d.capture_golden(e);

  dut::DesignUnderTest empty({}, {});
  empty.capture_golden(e);
  dut::ControlLines lines{true, true, true, false};
  for (std::uint8_t in = 0; in < 16; ++in) {
    v.expect(empty.run_check(e, lines, in).match_line == dut::MatchLine::Low, fmt::format("input {} mismatched", in));
  }

  auto flip = [&](Word far, std::size_t bit) {
    Frame f = e.frame(fabric::far_decode(far));
    f.flip(bit);
    return e.execute(proto::build_write_frame_sequence(e.device_id(), far, std::span(&f, 1)).words).ok();
  };
  std::size_t missed = 0;
  std::size_t tried = 0;
  for (const auto& entry : map.entries()) {
    if (entry.criticality == dut::Criticality::CriticalComparator) continue;
    ++tried;
    flip(entry.at.far, entry.at.bit);
    if (d.run_check(e, lines, static_cast<std::uint8_t>(entry.at.bit % 16)).match_line != dut::MatchLine::High) ++missed;
    flip(entry.at.far, entry.at.bit);
  }
  v.expect(missed == 0, fmt::format("{} of {} module-critical flips not detected", missed, tried));

  std::mt19937_64 rng(64);
  std::size_t wrong = 0;
  for (int i = 0; i < 256; ++i) {
    dut::Key256 key;
    dut::Block128 block;
    for (auto& b : key) b = static_cast<std::uint8_t>(rng());
    for (auto& b : block) b = static_cast<std::uint8_t>(rng());
    const auto got = dut::aes256_encrypt(key, block);
    if (oracle::aes256_ecb(key, block, true) != std::vector<std::uint8_t>(got.begin(), got.end())) ++wrong;
  }
  v.expect(wrong == 0, fmt::format("{} of 256 AES vectors differ", wrong));
  if (v.ok) v.detail = fmt::format("16 inputs, {} flips, 256 AES vectors", tried);
  return v;
}

Verdict idf_verifier() {
  Verdict v;
  const idf::Environment env{"idfsim", "2000-01-01", "acceptance", "/", "nobody", "none", "none"};
  const std::vector<std::pair<std::string, int>> fixtures{
      {"idf2_bank.fp", 2},      {"idf3_pins.fp", 3}, {"idf4_floorplan.fp", 4},        {"idf5_placement.fp", 5},
      {"idf6_loads.fp", 6},     {"idf6_fence.fp", 6}, {"idf6_shared_tile.fp", 6}};
  for (const auto& [file, check] : fixtures) {
    const auto report = idf::verify(idf::load_floorplan(oracle::fixture(file)), env);
    bool only_own = !report.violations.empty();
    for (const auto& x : report.violations) only_own = only_own && x.check == check;
    v.expect(only_own, fmt::format("{} did not trigger exactly IDF-{}", file, check));
  }
  v.expect(idf::verify(idf::load_floorplan(oracle::fixture("clean.fp")), env).violations.empty(),
           "clean.fp has violations");

  using O = idf::Orientation;
  struct Row {
    int width;
    O orientation;
    bool uncrossable;
    std::vector<int> removed;
  };
  const std::vector<Row> rows{
      {1, O::Horizontal, false, {1}},       {2, O::Horizontal, false, {1, 2}},       {4, O::Horizontal, false, {1, 2, 4}},
      {6, O::Horizontal, true, {}},         {1, O::Vertical, false, {1}},            {2, O::Vertical, false, {1, 2}},
      {4, O::Vertical, false, {1, 2, 4}},   {6, O::Vertical, false, {1, 2, 4, 6}},   {9, O::Vertical, true, {}},
  };
  for (const Row& r : rows) {
    const auto c = idf::fence_consequence(r.width, r.orientation);
    v.expect(c.uncrossable == r.uncrossable && (r.uncrossable || c.removed_spans == r.removed),
             fmt::format("fence width {} {}", r.width, r.orientation == O::Horizontal ? "horizontal" : "vertical"));
  }
  if (v.ok) v.detail = fmt::format("{} violating fixtures, clean.fp silent, 9 fence rows", fixtures.size());
  return v;
}

Verdict overhead_report() {
  Verdict v;
  const auto result = campaign::overhead_diff(campaign::load_utilization(oracle::fixture("util_without_idf.csv")),
                                              campaign::load_utilization(oracle::fixture("util_with_idf.csv")));
  struct Row {
    const char* site_type;
    long long overhead;
    double percent;
  };
  // Summary table, transcribed.
  const std::vector<Row> table{
      {"Slice LUTs", 1260, 2.3},
      {"LUT as Logic", 1, 0.01},
      {"LUT as Memory", 328, 1.8},
      {"LUT as Distributed RAM", 0, 0},
      {"LUT as Shift Register", 0, 0},
      {"Slice Registers", 2520, 2.3},
      {"Register as Flip Flop", 0, 0},
      {"Register as Latch", 0, 0},
      {"F7 Muxes", 630, 2.3},
      {"F8 Muxes", 315, 2.3},
      {"Block RAMB36/FIFO &RAMB36E1", 14, 5},
      {"DSP", 20, 9},
      {"Bonded IOB's", 8, 4},
      {"OUT_FIFO", 4, 25},
      {"IN_FIFO", 4, 3.17},
      {"IBUFDS", 8, 4.16},
      {"OLOGIC", 8, 4},
      {"ILOGIC", 8, 4},
      {"IDELAYE2/IDELAYE2_FINEDELAY", 8, 4},
      {"MMCME2_ADV", 2, 50},
      {"PLLE2_ADV", 2, 50},
  };
  std::size_t matched = 0;
  for (const Row& t : table) {
    const auto it = std::find_if(result.rows.begin(), result.rows.end(),
                                 [&](const campaign::OverheadRow& r) { return r.site_type == t.site_type; });
    if (it == result.rows.end()) {
      v.expect(false, fmt::format("{} missing", t.site_type));
      continue;
    }
    const bool ok = it->idf_overhead == t.overhead && std::abs(it->percent - t.percent) <= 0.15;
    v.expect(ok, fmt::format("{}: got {} / {:.2f}, table {} / {}", t.site_type, it->idf_overhead, it->percent,
                             t.overhead, t.percent));
    if (ok) ++matched;
  }
  v.detail = fmt::format("{} of {} rows match", matched, table.size()) + (v.ok ? "" : "; " + v.detail);
  return v;
}

Verdict session_transcript() {
  Verdict v;
  std::istringstream in("5\n0\n");
  std::ostringstream out, err;
  const int rc = cli::run({"menu"}, in, out, err);
  const std::string expected = oracle::read_text(oracle::fixture("menu_transcript.txt"));
  const std::string got = out.str();
  v.expect(rc == 0, fmt::format("menu exited {}", rc));
  v.expect(got.rfind(expected, 0) == 0, "banner and menu differ from the transcript");
  // Command 5 reprints the menu verbatim.
  std::string menu;
  for (const auto& l : cli::menu_lines()) menu += l + "\n";
  v.expect(got.find(menu, expected.size()) != std::string::npos, "reprinted menu differs");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "golden write, read-back and footer sequences", 1, golden_sequences},
      {2, "packet codec round-trip", 5, codec_roundtrip},
      {3, "fabric write/read-back identity and flip restore", 30, fabric_identity},
      {4, "DMA boundary, overflow and divisor rules", 1, dma_rules},
      {5, "interface arbitration trace", 1, arbitration},
      {6, "campaign totals over 20 frames", 120, campaign_reproduction},
      {7, "critical-bit reduction with isolation", 1, derived_comparison},
      {8, "DMR detection and AES-256 oracle", 5, dmr_properties},
      {9, "isolation rule checks and fence consequences", 1, idf_verifier},
      {10, "utilization overhead summary", 1, overhead_report},
      {11, "operator menu transcript", 1, session_transcript},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) v.expect(false, fmt::format("took {:.2f} s, limit {} s", secs, c.limit_s));
    fmt::print("{} criterion {}: {} ({:.3f} s){}{}\n", v.ok ? "PASS" : "FAIL", c.id, c.title, secs,
               v.detail.empty() ? "" : " - ", v.detail);
    if (!v.ok) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
