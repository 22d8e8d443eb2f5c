#pragma once

// Operator menu and batch subcommands.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idfsim/devc.hpp"
#include "idfsim/dut.hpp"
#include "idfsim/fabric.hpp"

namespace idfsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

enum class MenuCommand : int {
  Exit = 0,
  ReadFrame = 1,
  WriteFrame = 2,
  CheckPlDesign = 3,
  StartAutoInjection = 4,
  PrintMenu = 5,
};

/// The startup banner and command menu, one string per line.
[[nodiscard]] std::vector<std::string> banner_lines();
[[nodiscard]] std::vector<std::string> menu_lines();

/// Eight lowercase `0x`-prefixed words per line.
[[nodiscard]] std::string hex_dump(std::span<const Word> words);

/// Accepts `0x`-prefixed or bare hex.
[[nodiscard]] std::optional<Word> parse_hex_word(std::string_view text);

/// `all`, `N` (first N frames), `a-b` (inclusive frame indices) or a
/// comma-separated list of hex FARs.
[[nodiscard]] std::vector<Word> parse_frame_range(const fabric::DeviceGeometry& geometry, std::string_view spec);

/// Runs the serial-terminal menu until command 0 or end of input. The device
/// must already be initialized; `auto_fars` is the range used by command 4.
int interactive_session(std::istream& in, std::ostream& out, devc::Device& device, dut::DesignUnderTest& dut,
                        std::span<const Word> auto_fars);

/// Full command line, without the program name.
int run(std::vector<std::string> args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace idfsim::cli
