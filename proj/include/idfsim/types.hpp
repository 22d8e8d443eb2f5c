#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace idfsim {

using Word = std::uint32_t;

inline constexpr std::size_t kFrameWords = 101;
inline constexpr std::size_t kFrameBits = kFrameWords * 32;  // 3232

/// One configuration frame: the atomic unit of read, write and bit flip.
struct Frame {
  std::array<Word, kFrameWords> words{};

  bool operator==(const Frame&) const = default;

  [[nodiscard]] bool bit(std::size_t index) const {
    return ((words[index / 32] >> (index % 32)) & 1U) != 0;
  }
  void flip(std::size_t index) { words[index / 32] ^= Word{1} << (index % 32); }
};

/// A value or field outside its declared range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed textual input (config files, floorplans, CSV). Carries the line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace idfsim
