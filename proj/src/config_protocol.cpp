#include "idfsim/config_protocol.hpp"

#include <fmt/format.h>

#include <fstream>
#include <iterator>

namespace idfsim::proto {

namespace {

constexpr Word kType1Tag = 0b001;
constexpr Word kType2Tag = 0b010;

constexpr Word field(Word word, unsigned hi, unsigned lo) {
  return (word >> lo) & ((Word{1} << (hi - lo + 1)) - 1);
}

void push_write(std::vector<Word>& out, Register reg, Word value) {
  out.push_back(encode_type1(Opcode::Write, reg, 1));
  out.push_back(value);
}

void push_command(std::vector<Word>& out, Command cmd) {
  push_write(out, Register::CMD, static_cast<Word>(cmd));
}

void push_noops(std::vector<Word>& out, std::size_t n) { out.insert(out.end(), n, kNoopWord); }

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Noop: return "Noop";
    case Opcode::Read: return "Read";
    case Opcode::Write: return "Write";
  }
  return "?";
}

}  // namespace

std::optional<Register> register_from_address(std::uint32_t address) {
  switch (address) {
    case 0: case 1: case 2: case 3: case 4: case 5: case 6: case 12:
      return static_cast<Register>(address);
    default:
      return std::nullopt;
  }
}

const char* register_name(Register reg) {
  switch (reg) {
    case Register::CRC: return "CRC";
    case Register::FAR: return "FAR";
    case Register::FDRI: return "FDRI";
    case Register::FDRO: return "FDRO";
    case Register::CMD: return "CMD";
    case Register::CTL0: return "CTL0";
    case Register::MASK: return "MASK";
    case Register::IDCODE: return "IDCODE";
  }
  return "?";
}

const char* command_name(Word value) {
  switch (static_cast<Command>(value)) {
    case Command::WCFG: return "WCFG";
    case Command::RCFG: return "RCFG";
    case Command::START: return "START";
    case Command::RCRC: return "RCRC";
    case Command::GRESTORE: return "GRESTORE";
    case Command::SHUTDOWN: return "SHUTDOWN";
    case Command::DESYNC: return "DESYNC";
  }
  return nullptr;
}

Packet Packet::special(Kind kind) {
  Packet p;
  p.kind = kind;
  return p;
}

Packet Packet::type1_write(Register reg, std::vector<Word> payload) {
  Packet p;
  p.kind = Kind::Type1;
  p.op = Opcode::Write;
  p.reg = reg;
  p.word_count = static_cast<std::uint32_t>(payload.size());
  p.payload = std::move(payload);
  return p;
}

Packet Packet::type1_read(Register reg, std::uint32_t word_count) {
  Packet p;
  p.kind = Kind::Type1;
  p.op = Opcode::Read;
  p.reg = reg;
  p.word_count = word_count;
  return p;
}

Packet Packet::type2_write(std::vector<Word> payload) {
  Packet p;
  p.kind = Kind::Type2;
  p.op = Opcode::Write;
  p.word_count = static_cast<std::uint32_t>(payload.size());
  p.payload = std::move(payload);
  return p;
}

Packet Packet::type2_read(std::uint32_t word_count) {
  Packet p;
  p.kind = Kind::Type2;
  p.op = Opcode::Read;
  p.word_count = word_count;
  return p;
}

std::string describe(const Packet& p) {
  using K = Packet::Kind;
  switch (p.kind) {
    case K::Dummy: return "Dummy";
    case K::BusWidthSync: return "Bus Width Sync";
    case K::BusWidthDetect: return "Bus Width Detect";
    case K::Sync: return "Sync";
    case K::Noop: return "NOOP";
    case K::Type1: {
      std::string s = fmt::format("Type1 {} {} {} word{}", opcode_name(p.op), register_name(p.reg),
                                  p.word_count, p.word_count == 1 ? "" : "s");
      if (p.op == Opcode::Write && p.word_count == 1) {
        s += fmt::format(": 0x{:08x}", p.payload.front());
        if (p.reg == Register::CMD) {
          if (const char* name = command_name(p.payload.front())) s += fmt::format(" ({})", name);
        }
      }
      return s;
    }
    case K::Type2:
      return fmt::format("Type2 {} {} words", opcode_name(p.op), p.word_count);
  }
  return "?";
}

Word encode_type1(Opcode op, Register reg, std::uint32_t word_count) {
  if (word_count > kType1MaxCount) {
    throw RangeError(fmt::format("type-1 word count {} exceeds {}", word_count, kType1MaxCount));
  }
  if (op == Opcode::Noop) return kNoopWord;
  return (kType1Tag << 29) | (static_cast<Word>(op) << 27) |
         (static_cast<Word>(reg) << 13) | word_count;
}

Word encode_type2(Opcode op, std::uint32_t word_count) {
  if (word_count > kType2MaxCount) {
    throw RangeError(fmt::format("type-2 word count {} exceeds {}", word_count, kType2MaxCount));
  }
  if (op == Opcode::Noop) throw RangeError("type-2 packets must read or write");
  return (kType2Tag << 29) | (static_cast<Word>(op) << 27) | word_count;
}

std::vector<Word> encode(std::span<const Packet> packets) {
  using K = Packet::Kind;
  std::vector<Word> out;
  for (const Packet& p : packets) {
    switch (p.kind) {
      case K::Dummy: out.push_back(kDummyWord); break;
      case K::BusWidthSync: out.push_back(kBusWidthSync); break;
      case K::BusWidthDetect: out.push_back(kBusWidthDetect); break;
      case K::Sync: out.push_back(kSyncWord); break;
      case K::Noop: out.push_back(kNoopWord); break;
      case K::Type1:
      case K::Type2: {
        if (p.op == Opcode::Noop) throw RangeError("typed packet with noop opcode");
        out.push_back(p.kind == K::Type1 ? encode_type1(p.op, p.reg, p.word_count)
                                         : encode_type2(p.op, p.word_count));
        const std::size_t expected = p.op == Opcode::Write ? p.word_count : 0;
        if (p.payload.size() != expected) {
          throw RangeError(fmt::format("payload has {} words, header declares {}",
                                       p.payload.size(), expected));
        }
        out.insert(out.end(), p.payload.begin(), p.payload.end());
        break;
      }
    }
  }
  return out;
}

DecodeError::DecodeError(std::size_t offset, const std::string& what)
    : std::runtime_error(fmt::format("word {}: {}", offset, what)), offset_(offset) {}

std::vector<Packet> decode_stream(std::span<const Word> words, DecodeOptions options) {
  using K = Packet::Kind;
  enum class State { PreSync, Synced, Desynced };
  State state = options.start_synced ? State::Synced : State::PreSync;

  std::vector<Packet> out;
  std::size_t i = 0;
  while (i < words.size()) {
    const std::size_t at = i;
    const Word w = words[i++];

    if (state != State::Synced) {
      switch (w) {
        case kDummyWord: out.push_back(Packet::special(K::Dummy)); continue;
        case kBusWidthSync: out.push_back(Packet::special(K::BusWidthSync)); continue;
        case kBusWidthDetect: out.push_back(Packet::special(K::BusWidthDetect)); continue;
        case kSyncWord:
          out.push_back(Packet::special(K::Sync));
          state = State::Synced;
          continue;
        default:
          if (state == State::Desynced && w == kNoopWord) {
            out.push_back(Packet::special(K::Noop));
            continue;
          }
          throw DecodeError(at, fmt::format("unexpected word 0x{:08x} before sync", w));
      }
    }

    if (w == kSyncWord) {
      out.push_back(Packet::special(K::Sync));
      continue;
    }

    const Word tag = field(w, 31, 29);
    const auto op = static_cast<Opcode>(field(w, 28, 27));
    if (field(w, 28, 27) == 3) throw DecodeError(at, fmt::format("reserved opcode in 0x{:08x}", w));

    Packet p;
    if (tag == kType1Tag) {
      if (op == Opcode::Noop) {
        if (w != kNoopWord) throw DecodeError(at, fmt::format("malformed NOOP 0x{:08x}", w));
        out.push_back(Packet::special(K::Noop));
        continue;
      }
      if (field(w, 12, 11) != 0) {
        throw DecodeError(at, fmt::format("reserved bits set in 0x{:08x}", w));
      }
      const auto reg = register_from_address(field(w, 26, 13));
      if (!reg) throw DecodeError(at, fmt::format("unknown register {}", field(w, 26, 13)));
      p.kind = K::Type1;
      p.reg = *reg;
      p.word_count = field(w, 10, 0);
    } else if (tag == kType2Tag) {
      if (op == Opcode::Noop) throw DecodeError(at, "type-2 packet with noop opcode");
      p.kind = K::Type2;
      p.word_count = field(w, 26, 0);
    } else {
      throw DecodeError(at, fmt::format("invalid packet header 0x{:08x}", w));
    }
    p.op = op;

    if (op == Opcode::Write) {
      if (words.size() - i < p.word_count) {
        throw DecodeError(at, fmt::format("truncated payload: {} of {} words present",
                                          words.size() - i, p.word_count));
      }
      p.payload.assign(words.begin() + static_cast<std::ptrdiff_t>(i),
                       words.begin() + static_cast<std::ptrdiff_t>(i + p.word_count));
      i += p.word_count;
      if (p.kind == K::Type1 && p.reg == Register::CMD && !p.payload.empty() &&
          p.payload.back() == static_cast<Word>(Command::DESYNC)) {
        state = State::Desynced;
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

CommandSequence build_write_frame_sequence(Word device_id, Word far,
                                           std::span<const Frame> frames) {
  if (frames.empty()) throw RangeError("write-frame sequence needs at least one frame");
  const std::uint32_t count = frame_transfer_words(frames.size());
  if (count > kType2MaxCount) throw RangeError("too many frames for one type-2 packet");

  std::vector<Word> w;
  w.reserve(13 + count);
  w.push_back(kDummyWord);
  w.push_back(kSyncWord);
  w.push_back(kNoopWord);
  push_write(w, Register::IDCODE, device_id);
  push_write(w, Register::FAR, far);
  push_command(w, Command::WCFG);
  w.push_back(encode_type1(Opcode::Write, Register::FDRI, 0));
  w.push_back(encode_type2(Opcode::Write, count));
  for (const Frame& f : frames) w.insert(w.end(), f.words.begin(), f.words.end());
  w.insert(w.end(), kFrameWords, Word{0});  // flushes the frame buffer
  push_command(w, Command::DESYNC);
  return {SequenceIntent::WriteFrames, std::move(w)};
}

CommandSequence build_readback_sequence(Word far, std::size_t n_frames) {
  if (n_frames == 0) throw RangeError("read-back needs at least one frame");
  if (n_frames + 1 > kType2MaxCount / kFrameWords) throw RangeError("read-back too long");
  return build_readback_sequence_words(far, frame_transfer_words(n_frames));
}

CommandSequence build_readback_sequence_words(Word far, std::uint32_t fdro_words) {
  std::vector<Word> w = {kDummyWord, kBusWidthSync, kBusWidthDetect, kDummyWord, kSyncWord};
  w.push_back(kNoopWord);
  push_command(w, Command::SHUTDOWN);
  w.push_back(kNoopWord);
  push_command(w, Command::RCRC);
  push_noops(w, 1 + 5);
  push_command(w, Command::RCFG);
  w.push_back(kNoopWord);
  push_write(w, Register::FAR, far);
  w.push_back(encode_type1(Opcode::Read, Register::FDRO, 0));
  w.push_back(encode_type2(Opcode::Read, fdro_words));
  push_noops(w, 32);
  return {SequenceIntent::Readback, std::move(w)};
}

CommandSequence build_desync_footer() {
  return {SequenceIntent::Footer,
          {0x30008001, 0x0000000A, 0x20000000, 0x3000C001, 0x00000100, 0x3000A001, 0x00000000,
           0x30008001, 0x00000005, 0x20000000, 0x30008001, 0x0000000D, 0xFFFFFFFF, 0xFFFFFFFF,
           0x20000000, 0x20000000}};
}

std::vector<std::uint8_t> to_big_endian(std::span<const Word> words) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(words.size() * 4);
  for (Word w : words) {
    bytes.push_back(static_cast<std::uint8_t>(w >> 24));
    bytes.push_back(static_cast<std::uint8_t>(w >> 16));
    bytes.push_back(static_cast<std::uint8_t>(w >> 8));
    bytes.push_back(static_cast<std::uint8_t>(w));
  }
  return bytes;
}

std::vector<Word> from_big_endian(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw RangeError(fmt::format("sequence length {} is not a whole number of words", bytes.size()));
  }
  std::vector<Word> words;
  words.reserve(bytes.size() / 4);
  for (std::size_t i = 0; i < bytes.size(); i += 4) {
    words.push_back((Word{bytes[i]} << 24) | (Word{bytes[i + 1]} << 16) |
                    (Word{bytes[i + 2]} << 8) | Word{bytes[i + 3]});
  }
  return words;
}

void write_sequence_file(const std::string& path, std::span<const Word> words) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const auto bytes = to_big_endian(words);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Word> read_sequence_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return from_big_endian(bytes);
}

}  // namespace idfsim::proto
