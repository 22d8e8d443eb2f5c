#include "idfsim/cli.hpp"

#include <fmt/format.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <istream>
#include <ostream>

#include "idfsim/campaign.hpp"
#include "idfsim/config_protocol.hpp"
#include "idfsim/idf.hpp"
#include "idfsim/utilization.hpp"

namespace idfsim::cli {

namespace {

constexpr const char* kPrompt = "*** Enter Command ***";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void print_lines(std::ostream& out, const std::vector<std::string>& lines) {
  for (const std::string& l : lines) out << l << '\n';
}

bool use_color(const std::ostream& out) {
  if (std::getenv("NO_COLOR") != nullptr) return false;
  return &out == &std::cout && isatty(STDOUT_FILENO) == 1;
}

std::string paint(bool color, const char* code, std::string_view text) {
  return color ? fmt::format("\x1b[{}m{}\x1b[0m", code, text) : std::string(text);
}

// Reads a FAR from the operator, re-prompting on malformed input.
std::optional<Word> prompt_far(std::istream& in, std::ostream& out, const fabric::DeviceGeometry& geometry) {
  std::string line;
  while (true) {
    out << "Enter Frame Address (hex): " << std::flush;
    if (!std::getline(in, line)) return std::nullopt;
    const auto far = parse_hex_word(trim(line));
    if (!far) {
      out << fmt::format("Invalid frame address '{}'\n", trim(line));
      continue;
    }
    if ((*far >> 26) != 0 || !geometry.contains(fabric::far_decode(*far))) {
      out << fmt::format("Frame address 0x{:08x} is not on this device\n", *far);
      continue;
    }
    return far;
  }
}

struct Common {
  std::uint64_t seed = 1;
  std::string log_path;
  std::string format;
};

void write_log(const Common& common, const devc::Device& device) {
  if (common.log_path.empty()) return;
  std::ofstream log(common.log_path);
  if (!log) throw std::runtime_error(fmt::format("cannot open {}", common.log_path));
  for (const std::string& l : device.event_log()) log << l << '\n';
}

dut::Variant parse_variant(const std::string& s) {
  return s == "noidf" ? dut::Variant::WithoutIdf : dut::Variant::WithIdf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  f << text;
}

void emit_sequence(std::ostream& out, const std::vector<Word>& words, const std::string& path) {
  if (path.empty()) {
    out << hex_dump(words);
  } else {
    proto::write_sequence_file(path, words);
    out << fmt::format("wrote {} words to {}\n", words.size(), path);
  }
}

}  // namespace

std::vector<std::string> banner_lines() {
  return {
      "--- IDF Evaluation using PCAP ---",
      "*** Initializing the Program ***",
      fmt::format("** Uploading Frame @:{:08X}**", campaign::kTemplateAddress),
      "* Upload Finished*",
      "",
      "Clock Enabled",
      "",
  };
}

std::vector<std::string> menu_lines() {
  return {
      "*** Command Menu ***",
      "0: Exit",
      "1: Read Frame",
      "2: Write Frame",
      "3: Check PL Design",
      "4: Start Automated PL-Error Injection",
      "5: Print this menu",
  };
}

std::string hex_dump(std::span<const Word> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    out += fmt::format("{}0x{:08x}", i % 8 == 0 ? "" : " ", words[i]);
    if (i % 8 == 7 || i + 1 == words.size()) out += '\n';
  }
  return out;
}

std::optional<Word> parse_hex_word(std::string_view text) {
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) text.remove_prefix(2);
  if (text.empty() || text.size() > 8) return std::nullopt;
  Word v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (ec != std::errc{} || p != text.data() + text.size()) return std::nullopt;
  return v;
}

std::vector<Word> parse_frame_range(const fabric::DeviceGeometry& geometry, std::string_view spec) {
  spec = trim(spec);
  const std::size_t total = geometry.total_frames();
  auto index = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw std::invalid_argument(fmt::format("bad frame index '{}'", s));
    }
    return v;
  };
  std::vector<Word> out;
  auto push_range = [&](std::size_t a, std::size_t b) {
    if (a > b || b >= total) {
      throw std::invalid_argument(fmt::format("frame range {}-{} outside 0-{}", a, b, total - 1));
    }
    for (std::size_t i = a; i <= b; ++i) out.push_back(fabric::far_encode(geometry.at(i)));
  };
  if (spec.empty() || spec == "all") {
    push_range(0, total - 1);
  } else if (spec.find(',') != std::string_view::npos || spec.rfind("0x", 0) == 0) {
    std::size_t start = 0;
    while (start <= spec.size()) {
      std::size_t comma = spec.find(',', start);
      if (comma == std::string_view::npos) comma = spec.size();
      const std::string_view item = trim(spec.substr(start, comma - start));
      const auto far = parse_hex_word(item);
      if (!far || (*far >> 26) != 0 || !geometry.contains(fabric::far_decode(*far))) {
        throw std::invalid_argument(fmt::format("bad frame address '{}'", item));
      }
      out.push_back(*far);
      start = comma + 1;
    }
  } else if (const std::size_t dash = spec.find('-'); dash != std::string_view::npos) {
    push_range(index(spec.substr(0, dash)), index(spec.substr(dash + 1)));
  } else {
    const std::size_t n = index(spec);
    if (n == 0) throw std::invalid_argument("frame count must be positive");
    push_range(0, n - 1);
  }
  return out;
}

int interactive_session(std::istream& in, std::ostream& out, devc::Device& device, dut::DesignUnderTest& dut,
                        std::span<const Word> auto_fars) {
  campaign::Campaign c(device, dut);
  const auto banner = banner_lines();
  // The template upload happens between the upload and finished lines.
  out << banner[0] << '\n' << banner[1] << '\n' << banner[2] << '\n';
  c.init();
  for (std::size_t i = 3; i < banner.size(); ++i) out << banner[i] << '\n';
  print_lines(out, menu_lines());
  out << kPrompt << '\n';

  const auto& geometry = device.engine().geometry();
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view cmd = trim(line);
    int code = -1;
    const auto [p, ec] = std::from_chars(cmd.data(), cmd.data() + cmd.size(), code);
    if (cmd.empty() || ec != std::errc{} || p != cmd.data() + cmd.size() || code < 0 || code > 5) {
      out << fmt::format("Invalid command '{}', enter 0 to 5\n", cmd);
      out << kPrompt << '\n';
      continue;
    }
    try {
      switch (static_cast<MenuCommand>(code)) {
        case MenuCommand::Exit:
          out << "Exiting\n";
          return kExitOk;
        case MenuCommand::ReadFrame: {
          const auto far = prompt_far(in, out, geometry);
          if (!far) return kExitOk;
          const Frame f = c.read_frame(*far);
          out << fmt::format("Frame @0x{:08x}:\n", *far) << hex_dump(f.words);
          break;
        }
        case MenuCommand::WriteFrame: {
          const auto far = prompt_far(in, out, geometry);
          if (!far) return kExitOk;
          c.write_template_frame(*far);
          out << fmt::format("Frame written @0x{:08x}\n", *far);
          break;
        }
        case MenuCommand::CheckPlDesign: {
          const dut::MatchResult r = c.check_design();
          out << (r.match_line == dut::MatchLine::Low ? "Match OK: outputs agree\n"
                                                      : "Mismatch: outputs differ\n");
          out << fmt::format("AES_0: {}\nAES_1: {}\n", dut::to_hex(r.outputs[0]), dut::to_hex(r.outputs[1]));
          break;
        }
        case MenuCommand::StartAutoInjection: {
          out << fmt::format("Inject every bit of {} frames? (y/n): ", auto_fars.size()) << std::flush;
          if (!std::getline(in, line)) return kExitOk;
          const std::string_view answer = trim(line);
          if (answer != "y" && answer != "Y") {
            out << "Cancelled\n";
            break;
          }
          const campaign::CampaignResult r = c.run_auto(auto_fars);
          for (const campaign::FrameReport& fr : r.frames) {
            out << fmt::format("Frame 0x{:08x}: {} critical, {} non-critical\n", fr.far, fr.critical,
                               fr.non_critical);
          }
          out << fmt::format("Error count: {}\nError-free count: {}\n", c.error_count(), c.error_free_count());
          break;
        }
        case MenuCommand::PrintMenu:
          print_lines(out, menu_lines());
          break;
      }
    } catch (const std::exception& e) {
      out << "Error: " << e.what() << '\n';
    }
    out << kPrompt << '\n';
  }
  return kExitOk;
}

int run(std::vector<std::string> args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"FPGA isolation design flow evaluation simulator", "idfsim"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "Seed for generated data")->default_val(1);
  app.add_option("--log", common.log_path, "Write the device event log to this file");
  app.add_option("--format", common.format, "Output format")->check(CLI::IsMember({"text", "csv"}));

  // menu
  std::string geometry_name = "desk";
  std::string map_path;
  std::string variant = "idf";
  std::string frames_spec = "all";
  auto* menu = app.add_subcommand("menu", "Interactive operator menu on stdin/stdout");
  menu->add_option("--geometry", geometry_name, "Built-in geometry name or file");
  menu->add_option("--map", map_path, "Sensitivity map file");
  menu->add_option("--variant", variant)->check(CLI::IsMember({"idf", "noidf"}));
  menu->add_option("--frames", frames_spec, "Frames used by automated injection");

  // campaign
  std::string out_dir;
  unsigned shards = 1;
  bool fail_fast = false;
  std::size_t critical = 0;
  auto* camp = app.add_subcommand("campaign", "Automatic fault-injection campaign");
  camp->add_option("--variant", variant)->check(CLI::IsMember({"idf", "noidf"}));
  camp->add_option("--geometry", geometry_name, "Built-in geometry name or file");
  auto* map_opt = camp->add_option("--map", map_path, "Sensitivity map file");
  camp->add_option("--critical", critical, "Generate a map with this many critical bits (uses --seed)")
      ->excludes(map_opt);
  camp->add_option("--frames", frames_spec, "all, N, a-b or a FAR list");
  camp->add_option("--out", out_dir, "Directory for summary.txt, summary.csv and frames.csv");
  camp->add_option("--shards", shards, "Independent device copies run in parallel")->check(CLI::Range(1, 256));
  camp->add_flag("--fail-fast", fail_fast, "Stop at the first transfer error");

  // verify-idf
  std::string fp_path;
  bool strict_banks = false;
  std::string design_name;
  auto* verify = app.add_subcommand("verify-idf", "Run the isolation design-rule checks on a floorplan");
  verify->add_option("floorplan", fp_path)->required();
  verify->add_flag("--strict-banks", strict_banks, "Report shared I/O banks as errors");
  verify->add_option("--design", design_name, "Design name for the provenance block");

  // decode
  std::string seq_path;
  bool synced = false;
  auto* decode = app.add_subcommand("decode", "Pretty-print a big-endian configuration sequence");
  decode->add_option("sequence", seq_path)->required();
  decode->add_flag("--synced", synced, "Stream continues an already synchronized session");

  // encode-write-frame / encode-readback
  std::string far_text = "0";
  std::size_t n_frames = 1;
  std::string idcode_text = fmt::format("{:08x}", proto::kZedboardIdcode);
  std::string data_path;
  std::string seq_out;
  std::uint32_t fdro_words = 0;
  auto* enc_w = app.add_subcommand("encode-write-frame", "Emit a frame-write command sequence");
  enc_w->add_option("--far", far_text, "Starting frame address (hex)");
  enc_w->add_option("--frames", n_frames, "Number of zero frames when --data is absent")->check(CLI::PositiveNumber);
  enc_w->add_option("--data", data_path, "Frame dump supplying the frame data");
  enc_w->add_option("--idcode", idcode_text, "Device IDCODE (hex)");
  enc_w->add_option("--out", seq_out, "Write a big-endian binary file instead of a hex dump");
  auto* enc_r = app.add_subcommand("encode-readback", "Emit a read-back command sequence");
  enc_r->add_option("--far", far_text, "Starting frame address (hex)");
  auto* frames_opt = enc_r->add_option("--frames", n_frames, "Frames to read back")->check(CLI::PositiveNumber);
  enc_r->add_option("--words", fdro_words, "Explicit FDRO word count")->excludes(frames_opt);
  enc_r->add_option("--out", seq_out, "Write a big-endian binary file instead of a hex dump");
  auto* enc_f = app.add_subcommand("encode-footer", "Emit the de-synchronization footer");
  enc_f->add_option("--out", seq_out, "Write a big-endian binary file instead of a hex dump");

  // overhead
  std::string without_path;
  std::string with_path;
  auto* over = app.add_subcommand("overhead", "Resource overhead between two utilization reports");
  over->add_option("without", without_path, "Utilization CSV without isolation")->required();
  over->add_option("with", with_path, "Utilization CSV with isolation")->required();

  // gen-map
  std::size_t map_frames = 1;
  std::string split_text = "0.5,0.5,0";
  std::string map_out;
  auto* gen = app.add_subcommand("gen-map", "Generate a seeded sensitivity map");
  gen->add_option("--geometry", geometry_name, "Built-in geometry name or file");
  gen->add_option("--frames", map_frames, "Leading frames covered by the map")->check(CLI::PositiveNumber);
  gen->add_option("--critical", critical, "Number of critical bits")->required();
  gen->add_option("--split", split_text, "module0,module1,comparator shares");
  gen->add_option("--out", map_out, "Output file (default stdout)");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const bool csv = common.format == "csv";
  try {
    if (*menu) {
      const auto geometry = fabric::DeviceGeometry::load(geometry_name);
      devc::Device device(geometry, proto::kZedboardIdcode);
      device.set_logging(!common.log_path.empty());
      device.bring_up();
      dut::DesignUnderTest d({.variant = parse_variant(variant)},
                             map_path.empty() ? dut::SensitivityMap{} : dut::SensitivityMap::load(map_path));
      const auto fars = parse_frame_range(geometry, frames_spec);
      const int rc = interactive_session(in, out, device, d, fars);
      write_log(common, device);
      return rc;
    }
    if (*camp) {
      const auto geometry = fabric::DeviceGeometry::load(geometry_name);
      const auto fars = parse_frame_range(geometry, frames_spec);
      dut::SensitivityMap map;
      if (!map_path.empty()) {
        map = dut::SensitivityMap::load(map_path);
      } else if (critical > 0) {
        map = dut::sensitivity_generate(common.seed, fars, critical);
      }
      devc::Device device(geometry, proto::kZedboardIdcode);
      device.set_logging(!common.log_path.empty());
      device.bring_up();
      dut::DesignUnderTest d({.variant = parse_variant(variant)}, std::move(map));
      d.capture_golden(device.engine());
      campaign::CampaignOptions opt;
      opt.fail_fast = fail_fast;
      campaign::CampaignResult r;
      if (shards > 1) {
        r = campaign::run_sharded(device, d, fars, shards, opt);
      } else {
        campaign::Campaign c(device, d, opt);
        c.init();
        r = c.run_auto(fars);
      }
      const std::vector<campaign::CampaignSummary> rows{r.summary};
      out << (csv ? campaign::summary_csv(rows) : campaign::summary_text(rows));
      for (const campaign::InjectionFailure& f : r.failures) err << "injection failed: " << f.message << '\n';
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::filesystem::path dir(out_dir);
        write_text_file(dir / "summary.txt", campaign::summary_text(rows));
        write_text_file(dir / "summary.csv", campaign::summary_csv(rows));
        write_text_file(dir / "frames.csv", campaign::frames_csv(r.frames));
      }
      write_log(common, device);
      return r.failures.empty() ? kExitOk : kExitFindings;
    }
    if (*verify) {
      const idf::Floorplan plan = idf::load_floorplan(fp_path);
      const std::string design = design_name.empty() ? std::filesystem::path(fp_path).stem().string() : design_name;
      const idf::VerifyReport report = idf::verify(plan, idf::Environment::current(design), {strict_banks});
      if (csv) {
        out << report.to_lines();
      } else {
        const bool color = use_color(out);
        std::string text = report.to_text();
        if (color) {
          for (const char* sev : {"[error]", "[warning]"}) {
            const std::string plain(sev);
            const std::string painted = paint(true, plain == "[error]" ? "31" : "33", plain);
            for (std::size_t p = text.find(plain); p != std::string::npos; p = text.find(plain, p + painted.size())) {
              text.replace(p, plain.size(), painted);
            }
          }
        }
        out << text;
      }
      return report.errors() > 0 ? kExitFindings : kExitOk;
    }
    if (*decode) {
      const auto words = proto::read_sequence_file(seq_path);
      const auto packets = proto::decode_stream(words, {.start_synced = synced});
      if (csv) out << "index,packet\n";
      for (std::size_t i = 0; i < packets.size(); ++i) {
        out << (csv ? fmt::format("{},\"{}\"\n", i, proto::describe(packets[i]))
                    : fmt::format("{:4}  {}\n", i, proto::describe(packets[i])));
      }
      return kExitOk;
    }
    if (*enc_w || *enc_r) {
      const auto far = parse_hex_word(far_text);
      if (!far) {
        err << fmt::format("bad --far '{}'\n", far_text);
        return kExitUsage;
      }
      if (*enc_r) {
        const auto seq = fdro_words > 0 ? proto::build_readback_sequence_words(*far, fdro_words)
                                        : proto::build_readback_sequence(*far, n_frames);
        emit_sequence(out, seq.words, seq_out);
        return kExitOk;
      }
      const auto idcode = parse_hex_word(idcode_text);
      if (!idcode) {
        err << fmt::format("bad --idcode '{}'\n", idcode_text);
        return kExitUsage;
      }
      const std::vector<Frame> frames =
          data_path.empty() ? std::vector<Frame>(n_frames) : fabric::read_frame_dump(data_path);
      emit_sequence(out, proto::build_write_frame_sequence(*idcode, *far, frames).words, seq_out);
      return kExitOk;
    }
    if (*enc_f) {
      emit_sequence(out, proto::build_desync_footer().words, seq_out);
      return kExitOk;
    }
    if (*over) {
      const auto result =
          campaign::overhead_diff(campaign::load_utilization(without_path), campaign::load_utilization(with_path));
      if (common.format == "text") {
        out << fmt::format("{:<34} {:>12} {:>6}\n", "Site Type", "IDF Overhead", "%");
        for (const campaign::OverheadRow& r : result.rows) {
          out << fmt::format("{:<34} {:>12} {:>6.2f}\n", r.site_type, r.idf_overhead, r.percent);
        }
      } else {
        out << campaign::overhead_csv(result.rows);
      }
      for (const std::string& w : result.warnings) err << "warning: " << w << '\n';
      return kExitOk;
    }
    if (*gen) {
      const auto geometry = fabric::DeviceGeometry::load(geometry_name);
      if (map_frames > geometry.total_frames()) {
        err << fmt::format("--frames {} exceeds the {} frames of '{}'\n", map_frames, geometry.total_frames(),
                           geometry.name());
        return kExitUsage;
      }
      dut::ClassSplit split;
      {
        std::vector<double> parts;
        std::stringstream ss(split_text);
        std::string piece;
        while (std::getline(ss, piece, ',')) parts.push_back(std::stod(piece));
        if (parts.size() != 3) {
          err << "--split needs three comma-separated shares\n";
          return kExitUsage;
        }
        split = {parts[0], parts[1], parts[2]};
      }
      std::vector<Word> fars;
      for (std::size_t i = 0; i < map_frames; ++i) fars.push_back(fabric::far_encode(geometry.at(i)));
      const auto map = dut::sensitivity_generate(common.seed, fars, critical, split);
      if (map_out.empty()) {
        out << map.to_text();
      } else {
        map.save(map_out);
      }
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace idfsim::cli
