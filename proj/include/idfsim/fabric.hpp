#pragma once

// Simulated PL configuration plane: device geometry, frame addressing and the
// configuration engine that consumes packet streams.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idfsim/types.hpp"

namespace idfsim::fabric {

struct FarFields {
  std::uint8_t block_type = 0;  // 0..7
  std::uint8_t top_bottom = 0;  // 0..1
  std::uint8_t row = 0;         // 0..31
  std::uint16_t column = 0;     // 0..1023
  std::uint8_t minor = 0;       // 0..127

  auto operator<=>(const FarFields&) const = default;
};

// Layout: block_type[25:23] top_bottom[22] row[21:17] column[16:7] minor[6:0].
[[nodiscard]] Word far_encode(const FarFields& f);
[[nodiscard]] FarFields far_decode(Word w);
[[nodiscard]] std::string far_to_string(const FarFields& f);

struct ColumnSpec {
  std::string kind;
  std::uint8_t minors = 1;
};

struct BlockSpec {
  std::uint8_t block_type = 0;
  std::vector<ColumnSpec> columns;
};

/// Shape of the frame address space. Frames are enumerated minor first, then
/// column, row, half and block type; that order is also the order of
/// `index_of` and of FAR auto-increment in the engine.
class DeviceGeometry {
 public:
  DeviceGeometry(std::string name, std::uint8_t halves, std::uint8_t rows_per_half,
                 std::vector<BlockSpec> blocks);

  /// 2 halves x 2 rows x {4,2,2,1} minors: 36 frames.
  static DeviceGeometry desk();
  /// 9158 frames = 29,598,656 configuration bits.
  static DeviceGeometry z7020like();
  static std::optional<DeviceGeometry> builtin(std::string_view name);

  /// Key-value text: `name = ...`, `halves = 2`, `rows = 2`,
  /// `columns = CLB:4, INT:2x3` (block 0) and `columns.<bt> = ...`.
  static DeviceGeometry parse(std::string_view text);
  static DeviceGeometry load(const std::string& name_or_path);

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] std::uint8_t halves() const { return halves_; }
  [[nodiscard]] std::uint8_t rows_per_half() const { return rows_per_half_; }
  [[nodiscard]] const std::vector<BlockSpec>& blocks() const { return blocks_; }
  [[nodiscard]] std::size_t total_frames() const { return total_frames_; }
  [[nodiscard]] std::uint64_t total_bits() const { return total_frames_ * kFrameBits; }

  [[nodiscard]] bool contains(const FarFields& f) const;
  [[nodiscard]] FarFields first() const;
  /// Next frame address, or nullopt after the last. Throws RangeError on an invalid input.
  [[nodiscard]] std::optional<FarFields> next(const FarFields& f) const;

  [[nodiscard]] std::size_t index_of(const FarFields& f) const;
  [[nodiscard]] FarFields at(std::size_t index) const;
  [[nodiscard]] std::vector<Word> all_fars() const;

 private:
  [[nodiscard]] const BlockSpec* block(std::uint8_t type) const;

  std::string name_;
  std::uint8_t halves_;
  std::uint8_t rows_per_half_;
  std::vector<BlockSpec> blocks_;
  std::vector<std::size_t> block_offset_;              // first frame index of each block
  std::vector<std::vector<std::size_t>> minor_prefix_;  // per block, per column
  std::vector<std::size_t> row_frames_;                 // frames per row, per block
  std::size_t total_frames_ = 0;
};

enum class EventKind : std::uint8_t {
  Synced,
  Desynced,
  IdcodeAccepted,
  Command,
  FarWritten,
  FrameCommitted,
  FrameRead,
  RegisterRead,
  // errors
  IdMismatch,
  WriteNotArmed,
  ReadNotArmed,
  FarInvalid,
  BadPacket,
};

[[nodiscard]] const char* event_name(EventKind kind);
[[nodiscard]] constexpr bool is_error(EventKind kind) { return kind >= EventKind::IdMismatch; }

struct EngineEvent {
  EventKind kind;
  std::size_t offset = 0;  // word offset within the executed batch
  Word value = 0;

  bool operator==(const EngineEvent&) const = default;
  [[nodiscard]] std::string to_string() const;
};

struct ExecResult {
  std::vector<Word> readback;
  std::vector<EngineEvent> events;

  [[nodiscard]] bool ok() const;
  [[nodiscard]] const EngineEvent* first_error() const;
  [[nodiscard]] bool desynced() const;
};

/// Configuration engine: a 101-word frame buffer in front of frame memory.
/// A completed frame is committed only when the first word of the following
/// frame arrives, so a write must end with a flush frame that is discarded.
///
/// execute() is transactional: if any error event is raised the batch stops
/// and the engine (memory included) is left exactly as it was before the call.
class ConfigEngine {
 public:
  ConfigEngine(DeviceGeometry geometry, Word device_id);

  ExecResult execute(std::span<const Word> words);

  [[nodiscard]] const DeviceGeometry& geometry() const { return geometry_; }
  [[nodiscard]] Word device_id() const { return device_id_; }
  [[nodiscard]] bool synced() const { return regs_.synced; }
  [[nodiscard]] FarFields current_far() const { return regs_.far; }
  [[nodiscard]] std::size_t frame_buffer_fill() const { return regs_.buffer_fill; }

  [[nodiscard]] const Frame& frame(const FarFields& f) const;
  [[nodiscard]] const Frame& frame_at(std::size_t index) const { return memory_[index]; }
  [[nodiscard]] std::span<const Frame> frames() const { return memory_; }

  /// FNV-1a 64 over every frame in FAR order.
  [[nodiscard]] std::uint64_t snapshot_digest() const;

 private:
  struct Registers {
    bool synced = false;
    bool idcode_ok = false;
    bool wcfg = false;
    bool rcfg = false;
    bool far_exhausted = false;
    FarFields far{};
    Word last_command = 0;
    // packet in progress
    bool have_reg = false;
    std::uint16_t reg = 0;
    std::uint32_t remaining = 0;
    bool writing = false;
    // frame buffer
    Frame buffer{};
    std::size_t buffer_fill = 0;
    bool buffer_full = false;
  };

  struct Abort {};

  void step(Word w, std::size_t at, ExecResult& out);
  void write_register(Word value, std::size_t at, ExecResult& out);
  void fdri_word(Word value, std::size_t at, ExecResult& out);
  void start_read(std::uint32_t count, std::size_t at, ExecResult& out);
  void commit_buffer(std::size_t at, ExecResult& out);
  void advance_far(std::size_t at, ExecResult& out);
  [[noreturn]] void fail(EventKind kind, std::size_t at, Word value, ExecResult& out);

  DeviceGeometry geometry_;
  Word device_id_;
  std::vector<Frame> memory_;
  Registers regs_;
  std::vector<std::pair<std::size_t, Frame>> undo_;
};

/// Frame dumps: 101 big-endian words per frame, FAR order.
void write_frame_dump(const std::string& path, std::span<const Frame> frames);
[[nodiscard]] std::vector<Frame> read_frame_dump(const std::string& path);

}  // namespace idfsim::fabric
