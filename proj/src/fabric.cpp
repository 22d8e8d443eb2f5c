#include "idfsim/fabric.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "idfsim/config_protocol.hpp"

namespace idfsim::fabric {

namespace {

constexpr unsigned kFarUsedBits = 26;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

unsigned parse_unsigned(std::string_view s, std::size_t line, const char* what) {
  s = trim(s);
  unsigned v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(line, fmt::format("bad {} '{}'", what, s));
  }
  return v;
}

std::vector<ColumnSpec> parse_columns(std::string_view list, std::size_t line) {
  std::vector<ColumnSpec> cols;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const std::string_view item = trim(list.substr(0, comma));
    list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(line, fmt::format("column '{}' needs KIND:minors", item));
    }
    std::string_view count = item.substr(colon + 1);
    unsigned repeat = 1;
    if (const auto x = count.find('x'); x != std::string_view::npos) {
      repeat = parse_unsigned(count.substr(x + 1), line, "repeat");
      count = count.substr(0, x);
    }
    const unsigned minors = parse_unsigned(count, line, "minor count");
    if (minors == 0 || minors > 128) throw ParseError(line, "minor count must be 1..128");
    for (unsigned r = 0; r < repeat; ++r) {
      cols.push_back({std::string(trim(item.substr(0, colon))), static_cast<std::uint8_t>(minors)});
    }
  }
  return cols;
}

}  // namespace

Word far_encode(const FarFields& f) {
  if (f.block_type > 7 || f.top_bottom > 1 || f.row > 31 || f.column > 1023 || f.minor > 127) {
    throw RangeError("FAR field out of range: " + far_to_string(f));
  }
  return (Word{f.block_type} << 23) | (Word{f.top_bottom} << 22) | (Word{f.row} << 17) |
         (Word{f.column} << 7) | Word{f.minor};
}

FarFields far_decode(Word w) {
  if ((w >> kFarUsedBits) != 0) throw RangeError(fmt::format("FAR 0x{:08x} has reserved bits set", w));
  FarFields f;
  f.block_type = static_cast<std::uint8_t>((w >> 23) & 0x7);
  f.top_bottom = static_cast<std::uint8_t>((w >> 22) & 0x1);
  f.row = static_cast<std::uint8_t>((w >> 17) & 0x1F);
  f.column = static_cast<std::uint16_t>((w >> 7) & 0x3FF);
  f.minor = static_cast<std::uint8_t>(w & 0x7F);
  return f;
}

std::string far_to_string(const FarFields& f) {
  return fmt::format("bt={} tb={} row={} col={} minor={}", f.block_type, f.top_bottom, f.row,
                     f.column, f.minor);
}

DeviceGeometry::DeviceGeometry(std::string name, std::uint8_t halves, std::uint8_t rows_per_half,
                               std::vector<BlockSpec> blocks)
    : name_(std::move(name)), halves_(halves), rows_per_half_(rows_per_half),
      blocks_(std::move(blocks)) {
  if (halves_ < 1 || halves_ > 2) throw RangeError("halves must be 1 or 2");
  if (rows_per_half_ < 1 || rows_per_half_ > 32) throw RangeError("rows per half must be 1..32");
  if (blocks_.empty()) throw RangeError("geometry needs at least one block type");
  std::sort(blocks_.begin(), blocks_.end(),
            [](const BlockSpec& a, const BlockSpec& b) { return a.block_type < b.block_type; });
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const BlockSpec& spec = blocks_[b];
    if (spec.block_type > 7) throw RangeError("block type must be 0..7");
    if (b > 0 && blocks_[b - 1].block_type == spec.block_type) {
      throw RangeError(fmt::format("duplicate block type {}", spec.block_type));
    }
    if (spec.columns.empty() || spec.columns.size() > 1024) {
      throw RangeError("each block type needs 1..1024 columns");
    }
    std::vector<std::size_t> prefix;
    std::size_t minors = 0;
    for (const ColumnSpec& c : spec.columns) {
      if (c.minors < 1 || c.minors > 128) throw RangeError("minor count must be 1..128");
      prefix.push_back(minors);
      minors += c.minors;
    }
    block_offset_.push_back(total_frames_);
    minor_prefix_.push_back(std::move(prefix));
    row_frames_.push_back(minors);
    total_frames_ += minors * halves_ * rows_per_half_;
  }
}

DeviceGeometry DeviceGeometry::desk() {
  return DeviceGeometry("desk", 2, 2,
                        {{0, {{"CLB", 4}, {"BRAM", 2}, {"DSP", 2}, {"IOB", 1}}}});
}

DeviceGeometry DeviceGeometry::z7020like() {
  std::vector<ColumnSpec> cols;
  auto add = [&cols](const char* kind, std::uint8_t minors, int n) {
    for (int i = 0; i < n; ++i) cols.push_back({kind, minors});
  };
  add("CLB", 36, 109);
  add("BRAM", 28, 8);
  add("DSP", 28, 8);
  add("IOB", 42, 4);
  add("CLK", 30, 1);
  add("CFG", 9, 1);
  return DeviceGeometry("z7020like", 2, 1, {{0, std::move(cols)}});
}

std::optional<DeviceGeometry> DeviceGeometry::builtin(std::string_view name) {
  if (name == "desk") return desk();
  if (name == "z7020like") return z7020like();
  return std::nullopt;
}

DeviceGeometry DeviceGeometry::parse(std::string_view text) {
  std::string name = "custom";
  unsigned halves = 2;
  unsigned rows = 1;
  std::vector<BlockSpec> blocks;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "name") {
      name = std::string(value);
    } else if (key == "halves") {
      halves = parse_unsigned(value, line_no, "halves");
    } else if (key == "rows") {
      rows = parse_unsigned(value, line_no, "rows");
    } else if (key == "columns" || key.starts_with("columns.")) {
      const unsigned bt = key == "columns" ? 0 : parse_unsigned(key.substr(8), line_no, "block type");
      if (bt > 7) throw ParseError(line_no, "block type must be 0..7");
      blocks.push_back({static_cast<std::uint8_t>(bt), parse_columns(value, line_no)});
    } else {
      throw ParseError(line_no, fmt::format("unknown key '{}'", key));
    }
  }
  if (halves > 2 || rows > 32) throw ParseError(line_no, "halves/rows out of range");
  try {
    return DeviceGeometry(name, static_cast<std::uint8_t>(halves), static_cast<std::uint8_t>(rows),
                          std::move(blocks));
  } catch (const RangeError& e) {
    throw ParseError(line_no, e.what());
  }
}

DeviceGeometry DeviceGeometry::load(const std::string& name_or_path) {
  if (auto g = builtin(name_or_path)) return *std::move(g);
  std::ifstream in(name_or_path);
  if (!in) throw std::runtime_error("no built-in geometry or file named '" + name_or_path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

const BlockSpec* DeviceGeometry::block(std::uint8_t type) const {
  for (const BlockSpec& b : blocks_) {
    if (b.block_type == type) return &b;
  }
  return nullptr;
}

bool DeviceGeometry::contains(const FarFields& f) const {
  const BlockSpec* b = block(f.block_type);
  return b != nullptr && f.top_bottom < halves_ && f.row < rows_per_half_ &&
         f.column < b->columns.size() && f.minor < b->columns[f.column].minors;
}

FarFields DeviceGeometry::first() const { return at(0); }

std::optional<FarFields> DeviceGeometry::next(const FarFields& f) const {
  const std::size_t i = index_of(f);
  if (i + 1 >= total_frames_) return std::nullopt;
  return at(i + 1);
}

std::size_t DeviceGeometry::index_of(const FarFields& f) const {
  if (!contains(f)) throw RangeError("FAR not in geometry '" + name_ + "': " + far_to_string(f));
  std::size_t b = 0;
  while (blocks_[b].block_type != f.block_type) ++b;
  return block_offset_[b] +
         (std::size_t{f.top_bottom} * rows_per_half_ + f.row) * row_frames_[b] +
         minor_prefix_[b][f.column] + f.minor;
}

FarFields DeviceGeometry::at(std::size_t index) const {
  if (index >= total_frames_) throw RangeError(fmt::format("frame index {} out of range", index));
  std::size_t b = block_offset_.size() - 1;
  while (block_offset_[b] > index) --b;
  std::size_t rest = index - block_offset_[b];
  FarFields f;
  f.block_type = blocks_[b].block_type;
  const std::size_t row_global = rest / row_frames_[b];
  rest %= row_frames_[b];
  f.top_bottom = static_cast<std::uint8_t>(row_global / rows_per_half_);
  f.row = static_cast<std::uint8_t>(row_global % rows_per_half_);
  const auto& prefix = minor_prefix_[b];
  const auto it = std::upper_bound(prefix.begin(), prefix.end(), rest);
  f.column = static_cast<std::uint16_t>(std::distance(prefix.begin(), it) - 1);
  f.minor = static_cast<std::uint8_t>(rest - prefix[f.column]);
  return f;
}

std::vector<Word> DeviceGeometry::all_fars() const {
  std::vector<Word> out;
  out.reserve(total_frames_);
  for (std::size_t i = 0; i < total_frames_; ++i) out.push_back(far_encode(at(i)));
  return out;
}

const char* event_name(EventKind kind) {
  switch (kind) {
    case EventKind::Synced: return "Synced";
    case EventKind::Desynced: return "Desynced";
    case EventKind::IdcodeAccepted: return "IdcodeAccepted";
    case EventKind::Command: return "Command";
    case EventKind::FarWritten: return "FarWritten";
    case EventKind::FrameCommitted: return "FrameCommitted";
    case EventKind::FrameRead: return "FrameRead";
    case EventKind::RegisterRead: return "RegisterRead";
    case EventKind::IdMismatch: return "IdMismatch";
    case EventKind::WriteNotArmed: return "WriteNotArmed";
    case EventKind::ReadNotArmed: return "ReadNotArmed";
    case EventKind::FarInvalid: return "FarInvalid";
    case EventKind::BadPacket: return "BadPacket";
  }
  return "?";
}

std::string EngineEvent::to_string() const {
  return fmt::format("{} offset={} value=0x{:08x}", event_name(kind), offset, value);
}

bool ExecResult::ok() const { return first_error() == nullptr; }

const EngineEvent* ExecResult::first_error() const {
  for (const EngineEvent& e : events) {
    if (is_error(e.kind)) return &e;
  }
  return nullptr;
}

bool ExecResult::desynced() const {
  return std::any_of(events.begin(), events.end(),
                     [](const EngineEvent& e) { return e.kind == EventKind::Desynced; });
}

ConfigEngine::ConfigEngine(DeviceGeometry geometry, Word device_id)
    : geometry_(std::move(geometry)), device_id_(device_id), memory_(geometry_.total_frames()) {
  regs_.far = geometry_.first();
}

const Frame& ConfigEngine::frame(const FarFields& f) const { return memory_[geometry_.index_of(f)]; }

ExecResult ConfigEngine::execute(std::span<const Word> words) {
  ExecResult out;
  const Registers saved = regs_;
  undo_.clear();
  try {
    for (std::size_t i = 0; i < words.size(); ++i) step(words[i], i, out);
  } catch (const Abort&) {
    for (auto it = undo_.rbegin(); it != undo_.rend(); ++it) memory_[it->first] = it->second;
    regs_ = saved;
    out.readback.clear();
  }
  undo_.clear();
  return out;
}

void ConfigEngine::fail(EventKind kind, std::size_t at, Word value, ExecResult& out) {
  out.events.push_back({kind, at, value});
  throw Abort{};
}

void ConfigEngine::step(Word w, std::size_t at, ExecResult& out) {
  using proto::Opcode;
  using proto::Register;

  if (!regs_.synced) {
    if (w == proto::kSyncWord) {
      regs_.synced = true;
      regs_.have_reg = false;
      regs_.remaining = 0;
      out.events.push_back({EventKind::Synced, at, w});
    }
    return;
  }

  if (regs_.remaining > 0) {
    --regs_.remaining;
    if (regs_.reg == static_cast<std::uint16_t>(Register::FDRI)) {
      fdri_word(w, at, out);
    } else {
      write_register(w, at, out);
    }
    return;
  }

  if (w == proto::kSyncWord || w == proto::kNoopWord) return;

  const Word tag = w >> 29;
  const Word op = (w >> 27) & 0x3;
  if (op == 3) fail(EventKind::BadPacket, at, w, out);
  if (tag == 1) {
    if (op == static_cast<Word>(Opcode::Noop)) return;
    const auto reg = proto::register_from_address((w >> 13) & 0x3FFF);
    if (!reg) fail(EventKind::BadPacket, at, w, out);
    regs_.have_reg = true;
    regs_.reg = static_cast<std::uint16_t>(*reg);
  } else if (tag == 2) {
    if (!regs_.have_reg || op == static_cast<Word>(Opcode::Noop)) fail(EventKind::BadPacket, at, w, out);
  } else {
    fail(EventKind::BadPacket, at, w, out);
  }

  const std::uint32_t count = tag == 1 ? (w & 0x7FF) : (w & 0x7FFFFFF);
  if (op == static_cast<Word>(Opcode::Write)) {
    regs_.remaining = count;
  } else {
    start_read(count, at, out);
  }
}

void ConfigEngine::write_register(Word value, std::size_t at, ExecResult& out) {
  using proto::Command;
  using proto::Register;
  switch (static_cast<Register>(regs_.reg)) {
    case Register::IDCODE:
      if (value != device_id_) fail(EventKind::IdMismatch, at, value, out);
      regs_.idcode_ok = true;
      out.events.push_back({EventKind::IdcodeAccepted, at, value});
      break;
    case Register::FAR: {
      FarFields f;
      try {
        f = far_decode(value);
      } catch (const RangeError&) {
        fail(EventKind::FarInvalid, at, value, out);
      }
      if (!geometry_.contains(f)) fail(EventKind::FarInvalid, at, value, out);
      regs_.far = f;
      regs_.far_exhausted = false;
      regs_.buffer_fill = 0;
      regs_.buffer_full = false;
      out.events.push_back({EventKind::FarWritten, at, value});
      break;
    }
    case Register::CMD:
      regs_.last_command = value;
      if (value == static_cast<Word>(Command::WCFG)) {
        regs_.wcfg = true;
        regs_.rcfg = false;
      } else if (value == static_cast<Word>(Command::RCFG)) {
        regs_.rcfg = true;
        regs_.wcfg = false;
      }
      if (value == static_cast<Word>(Command::DESYNC)) {
        regs_.synced = false;
        regs_.idcode_ok = regs_.wcfg = regs_.rcfg = false;
        regs_.have_reg = false;
        regs_.remaining = 0;
        regs_.buffer_fill = 0;
        regs_.buffer_full = false;
        out.events.push_back({EventKind::Desynced, at, value});
      } else {
        out.events.push_back({EventKind::Command, at, value});
      }
      break;
    default:
      // CRC, CTL0, MASK: accepted, not modeled.
      break;
  }
}

void ConfigEngine::fdri_word(Word value, std::size_t at, ExecResult& out) {
  if (!regs_.idcode_ok) fail(EventKind::IdMismatch, at, 0, out);
  if (!regs_.wcfg) fail(EventKind::WriteNotArmed, at, regs_.last_command, out);
  if (regs_.buffer_full) {
    commit_buffer(at, out);
    regs_.buffer_fill = 0;
    regs_.buffer_full = false;
  }
  regs_.buffer.words[regs_.buffer_fill++] = value;
  if (regs_.buffer_fill == kFrameWords) {
    regs_.buffer_full = true;
    regs_.buffer_fill = 0;
  }
}

void ConfigEngine::commit_buffer(std::size_t at, ExecResult& out) {
  if (regs_.far_exhausted) fail(EventKind::FarInvalid, at, 0, out);
  const std::size_t index = geometry_.index_of(regs_.far);
  undo_.emplace_back(index, memory_[index]);
  memory_[index] = regs_.buffer;
  out.events.push_back({EventKind::FrameCommitted, at, far_encode(regs_.far)});
  advance_far(at, out);
}

void ConfigEngine::advance_far(std::size_t, ExecResult&) {
  if (auto n = geometry_.next(regs_.far)) {
    regs_.far = *n;
  } else {
    regs_.far_exhausted = true;
  }
}

void ConfigEngine::start_read(std::uint32_t count, std::size_t at, ExecResult& out) {
  using proto::Register;
  const auto reg = static_cast<Register>(regs_.reg);
  if (reg != Register::FDRO) {
    if (count == 0) return;
    Word value = 0;
    if (reg == Register::IDCODE) value = device_id_;
    if (reg == Register::FAR) value = far_encode(regs_.far);
    out.readback.push_back(value);
    out.readback.insert(out.readback.end(), count - 1, Word{0});
    out.events.push_back({EventKind::RegisterRead, at, regs_.reg});
    return;
  }
  if (count == 0) return;
  if (!regs_.rcfg) fail(EventKind::ReadNotArmed, at, regs_.last_command, out);

  const std::size_t dummy = std::min<std::size_t>(count, kFrameWords);
  out.readback.insert(out.readback.end(), dummy, Word{0});
  std::size_t left = count - dummy;
  while (left > 0) {
    if (regs_.far_exhausted) fail(EventKind::FarInvalid, at, 0, out);
    const Frame& f = memory_[geometry_.index_of(regs_.far)];
    const std::size_t n = std::min(left, kFrameWords);
    out.readback.insert(out.readback.end(), f.words.begin(),
                        f.words.begin() + static_cast<std::ptrdiff_t>(n));
    left -= n;
    if (n == kFrameWords) {
      out.events.push_back({EventKind::FrameRead, at, far_encode(regs_.far)});
      advance_far(at, out);
    }
  }
}

std::uint64_t ConfigEngine::snapshot_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Frame& f : memory_) {
    for (Word w : f.words) {
      for (int shift = 24; shift >= 0; shift -= 8) {
        h ^= (w >> shift) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void write_frame_dump(const std::string& path, std::span<const Frame> frames) {
  std::vector<Word> words;
  words.reserve(frames.size() * kFrameWords);
  for (const Frame& f : frames) words.insert(words.end(), f.words.begin(), f.words.end());
  proto::write_sequence_file(path, words);
}

std::vector<Frame> read_frame_dump(const std::string& path) {
  const auto words = proto::read_sequence_file(path);
  if (words.size() % kFrameWords != 0) {
    throw RangeError(fmt::format("{}: {} words is not a whole number of frames", path, words.size()));
  }
  std::vector<Frame> frames(words.size() / kFrameWords);
  for (std::size_t i = 0; i < words.size(); ++i) frames[i / kFrameWords].words[i % kFrameWords] = words[i];
  return frames;
}

}  // namespace idfsim::fabric
