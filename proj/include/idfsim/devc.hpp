#pragma once

// DevC register bank, PCAP bridge, DMA engine and configuration-interface
// arbitration sitting between PS software and the configuration engine.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "idfsim/fabric.hpp"

namespace idfsim::devc {

using Address = std::uint32_t;

inline constexpr Word kUnlockKey = 0x757BDF0D;
inline constexpr Address kPlAddress = 0xFFFFFFFF;
inline constexpr std::size_t kRxFifoBytes = 1024;
inline constexpr std::size_t kMaxReadbackWords = 10 * kFrameWords;  // stays under 4 KB
inline constexpr unsigned kSafeDivisor = 4;
inline constexpr double kPcapBaseClockMhz = 100.0;
inline constexpr double kPcapBytesPerSecond = 145e6;  // at divisor 1

/// Sparse byte-addressed PS memory. Unwritten bytes read as zero. Words are
/// stored little-endian.
class Dram {
 public:
  [[nodiscard]] std::uint8_t read_byte(Address a) const;
  void write_byte(Address a, std::uint8_t v);
  [[nodiscard]] Word read_word(Address a) const;
  void write_word(Address a, Word v);
  [[nodiscard]] std::vector<Word> read_words(Address a, std::size_t n) const;
  void write_words(Address a, std::span<const Word> words);

  void load_image(Address a, std::span<const std::uint8_t> bytes);
  [[nodiscard]] std::vector<std::uint8_t> store_image(Address a, std::size_t n) const;
  void load_file(Address a, const std::string& path);
  void store_file(Address a, std::size_t n, const std::string& path) const;

 private:
  static constexpr Address kPageBits = 12;
  using Page = std::vector<std::uint8_t>;
  std::unordered_map<Address, Page> pages_;
};

enum class Interface : std::uint8_t { None, Jtag, Pcap, Icap, Rbcrc };
[[nodiscard]] const char* interface_name(Interface i);

struct ArbitrationEvent {
  enum class Kind : std::uint8_t { Granted, Preempted, Ignored, Released, AlreadyOwner };
  Kind kind;
  Interface requester;
  Interface previous;

  bool operator==(const ArbitrationEvent&) const = default;
  [[nodiscard]] std::string to_string() const;
};

/// Fixed priority JTAG > PCAP > ICAP > RBCRC. RBCRC is granted only when idle.
class Arbiter {
 public:
  ArbitrationEvent acquire(Interface requester);
  std::optional<ArbitrationEvent> release_on_desync();
  [[nodiscard]] Interface owner() const { return owner_; }

 private:
  Interface owner_ = Interface::None;
};

enum class DevcReg : std::uint8_t { Ctrl, DmaSrc, DmaDst, DmaSrcLen, DmaDstLen };

struct DevcRegisters {
  struct Ctrl {
    bool pcap_pr = false;
    bool pcap_mode = false;
    bool loopback = false;
  } ctrl;
  bool locked = true;
  struct IntSts {
    bool dma_done = false;
    bool pcap_done = false;
    bool cfg_error = false;
    bool dma_error = false;
  } int_sts;
  Address dma_src = 0;
  Address dma_dst = 0;
  Word dma_src_len = 0;
  Word dma_dst_len = 0;
};

inline constexpr Word kCtrlPcapPr = 1U << 27;
inline constexpr Word kCtrlPcapMode = 1U << 26;
inline constexpr Word kCtrlLoopback = 1U << 4;

enum class InitPhase : std::uint8_t { Locked, PowerOk, InitDone, PcapSelected, CfgDone };
[[nodiscard]] const char* phase_name(InitPhase p);

enum class Direction : std::uint8_t { PsToPl, PlToPs };

struct DmaDescriptor {
  Address src;
  Address dst;
  Word src_len;
  Word dst_len;
  Direction direction;
};

enum class TransferErrorKind : std::uint8_t {
  None,
  NotOwner,
  WidthMismatch,
  BoundaryViolation,
  FifoOverflow,
  ConfigError,
  Injected,
};
[[nodiscard]] const char* transfer_error_name(TransferErrorKind k);

struct DmaResult {
  TransferErrorKind error = TransferErrorKind::None;
  std::string message;
  std::size_t words_moved = 0;
  std::vector<fabric::EngineEvent> engine_events;

  [[nodiscard]] bool ok() const { return error == TransferErrorKind::None; }
};

class DevcError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LockedError : public DevcError {
 public:
  using DevcError::DevcError;
};

class SequencingError : public DevcError {
 public:
  using DevcError::DevcError;
};

class DescriptorError : public DevcError {
 public:
  using DevcError::DevcError;
};

class TransferError : public DevcError {
 public:
  TransferError(TransferErrorKind kind, const std::string& what) : DevcError(what), kind_(kind) {}
  [[nodiscard]] TransferErrorKind kind() const { return kind_; }

 private:
  TransferErrorKind kind_;
};

/// DevC + PCAP + configuration engine + DRAM: one exclusively owned unit.
class Device {
 public:
  Device(fabric::DeviceGeometry geometry, Word device_id);

  // Register interface.
  void unlock(Word key);
  void write_register(DevcReg reg, Word value);
  [[nodiscard]] const DevcRegisters& registers() const { return regs_; }

  // PL initialization, each step requires the previous one.
  void wait_for_power();
  void wait_for_init();
  void select_pcap();
  void wait_cfg_done();
  /// Runs the four steps above in order from the current phase.
  void pl_initialize();
  [[nodiscard]] InitPhase phase() const { return phase_; }

  /// Unlock, select PCAP in CTRL, disable loopback and initialize the PL.
  void bring_up();

  void set_pcap_clock_divisor(unsigned divisor);
  [[nodiscard]] unsigned pcap_clock_divisor() const { return divisor_; }
  [[nodiscard]] double pcap_clock_mhz() const { return kPcapBaseClockMhz / divisor_; }

  /// Writes SRC, DST, SRC_LEN then DST_LEN; the last write queues the descriptor.
  void dma_enqueue(Address src, Address dst, Word src_len, Word dst_len);
  [[nodiscard]] std::size_t dma_queue_size() const { return queue_.size(); }
  /// Processes the oldest queued descriptor. All-or-nothing.
  DmaResult dma_process();

  // Convenience wrappers that enqueue + process and throw TransferError on failure.
  void send_to_pl(Address src, std::size_t words);
  void receive_from_pl(Address dst, std::size_t words);

  ArbitrationEvent interface_acquire(Interface who);
  std::optional<ArbitrationEvent> interface_release_on_desync();
  [[nodiscard]] Interface interface_owner() const { return arbiter_.owner(); }

  [[nodiscard]] Dram& dram() { return dram_; }
  [[nodiscard]] const Dram& dram() const { return dram_; }
  [[nodiscard]] const fabric::ConfigEngine& engine() const { return engine_; }
  [[nodiscard]] std::size_t pending_readback_words() const { return pl_output_.size(); }

  // Informational throughput accounting.
  [[nodiscard]] std::uint64_t bytes_moved() const { return bytes_moved_; }
  [[nodiscard]] double simulated_seconds() const { return simulated_seconds_; }

  /// Line-oriented event log: `<seq>\t<source>\t<kind>\t<detail>`.
  [[nodiscard]] const std::vector<std::string>& event_log() const { return log_; }
  void set_logging(bool on) { logging_ = on; }

  /// Test hook: return true to force the transfer to fail with TransferErrorKind::Injected.
  void set_transfer_fault_hook(std::function<bool(const DmaDescriptor&)> hook) {
    fault_hook_ = std::move(hook);
  }

 private:
  void log(const char* source, const std::string& kind, const std::string& detail);
  DmaResult fail(DmaResult r, TransferErrorKind kind, std::string message);
  void account(std::size_t words);

  fabric::ConfigEngine engine_;
  Dram dram_;
  DevcRegisters regs_;
  InitPhase phase_ = InitPhase::Locked;
  unsigned divisor_ = 1;
  Arbiter arbiter_;
  std::deque<DmaDescriptor> queue_;
  std::deque<Word> rx_fifo_;
  std::vector<Word> pl_output_;
  std::uint64_t bytes_moved_ = 0;
  double simulated_seconds_ = 0;
  std::vector<std::string> log_;
  bool logging_ = true;
  std::uint64_t log_seq_ = 0;
  std::function<bool(const DmaDescriptor&)> fault_hook_;
};

}  // namespace idfsim::devc
