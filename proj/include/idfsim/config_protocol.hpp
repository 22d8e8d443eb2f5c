#pragma once

// Bit-exact codec for 7-series style configuration packets and the canonical
// command sequences used to write, read back and desynchronize the
// configuration engine.
//
// Header layout:
//   Type 1: [31:29]=001 [28:27]=opcode [26:13]=register [10:0]=word count
//   Type 2: [31:29]=010 [28:27]=opcode [26:0]=word count

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idfsim/types.hpp"

namespace idfsim::proto {

enum class Register : std::uint16_t {
  CRC = 0,
  FAR = 1,
  FDRI = 2,
  FDRO = 3,
  CMD = 4,
  CTL0 = 5,
  MASK = 6,
  IDCODE = 12,
};

enum class Command : Word {
  WCFG = 0x1,
  RCFG = 0x4,
  START = 0x5,
  RCRC = 0x7,
  GRESTORE = 0xA,
  SHUTDOWN = 0xB,
  DESYNC = 0xD,
};

enum class Opcode : std::uint8_t { Noop = 0, Read = 1, Write = 2 };

inline constexpr Word kDummyWord = 0xFFFFFFFF;
inline constexpr Word kBusWidthSync = 0x000000BB;
inline constexpr Word kBusWidthDetect = 0x11220044;
inline constexpr Word kSyncWord = 0xAA995566;
inline constexpr Word kNoopWord = 0x20000000;

inline constexpr std::uint32_t kType1MaxCount = 0x7FF;
inline constexpr std::uint32_t kType2MaxCount = (1U << 27) - 1;

// Zedboard (XC7Z020) device id.
inline constexpr Word kZedboardIdcode = 0x23727093;

[[nodiscard]] std::optional<Register> register_from_address(std::uint32_t address);
[[nodiscard]] const char* register_name(Register reg);
[[nodiscard]] const char* command_name(Word value);  // nullptr if not a known command

/// Decoded configuration packet or special word.
struct Packet {
  enum class Kind : std::uint8_t { Dummy, BusWidthSync, BusWidthDetect, Sync, Noop, Type1, Type2 };

  Kind kind = Kind::Noop;
  Opcode op = Opcode::Noop;
  Register reg = Register::CRC;  // Type1 only
  std::uint32_t word_count = 0;
  std::vector<Word> payload;     // write packets only; size == word_count

  bool operator==(const Packet&) const = default;

  static Packet special(Kind kind);
  static Packet type1_write(Register reg, std::vector<Word> payload);
  static Packet type1_read(Register reg, std::uint32_t word_count);
  static Packet type2_write(std::vector<Word> payload);
  static Packet type2_read(std::uint32_t word_count);
};

[[nodiscard]] std::string describe(const Packet& packet);

[[nodiscard]] Word encode_type1(Opcode op, Register reg, std::uint32_t word_count);
[[nodiscard]] Word encode_type2(Opcode op, std::uint32_t word_count);

/// Serializes packets back to words. Throws RangeError on invalid packets.
[[nodiscard]] std::vector<Word> encode(std::span<const Packet> packets);

class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::size_t offset, const std::string& what);
  [[nodiscard]] std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct DecodeOptions {
  // Treat the stream as the continuation of an already-synchronized session.
  bool start_synced = false;
};

/// Greedy left-to-right decode. Throws DecodeError with the word offset of
/// the offending header.
[[nodiscard]] std::vector<Packet> decode_stream(std::span<const Word> words,
                                                DecodeOptions options = {});

enum class SequenceIntent : std::uint8_t { WriteFrames, Readback, Footer };

struct CommandSequence {
  SequenceIntent intent;
  std::vector<Word> words;
};

/// FDRI/FDRO word count for `frames` frames plus the one flush/dummy frame.
[[nodiscard]] constexpr std::uint32_t frame_transfer_words(std::size_t frames) {
  return static_cast<std::uint32_t>((frames + 1) * kFrameWords);
}

/// Frame write: preamble, IDCODE, FAR, WCFG, FDRI data, one flush frame, DESYNC.
[[nodiscard]] CommandSequence build_write_frame_sequence(Word device_id, Word far,
                                                         std::span<const Frame> frames);

/// Read-back request for `n_frames` frames (plus the leading dummy frame).
[[nodiscard]] CommandSequence build_readback_sequence(Word far, std::size_t n_frames);

/// Read-back request with an explicit FDRO word count (e.g. full-device dumps).
[[nodiscard]] CommandSequence build_readback_sequence_words(Word far, std::uint32_t fdro_words);

[[nodiscard]] CommandSequence build_desync_footer();

/// Raw sequence files: 32-bit big-endian words, no header.
[[nodiscard]] std::vector<std::uint8_t> to_big_endian(std::span<const Word> words);
[[nodiscard]] std::vector<Word> from_big_endian(std::span<const std::uint8_t> bytes);
void write_sequence_file(const std::string& path, std::span<const Word> words);
[[nodiscard]] std::vector<Word> read_sequence_file(const std::string& path);

}  // namespace idfsim::proto
