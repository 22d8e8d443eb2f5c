#include "idfsim/devc.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <iterator>

namespace idfsim::devc {

namespace {

constexpr Address kPageSize = Address{1} << 12;

int priority(Interface i) {
  switch (i) {
    case Interface::Jtag: return 4;
    case Interface::Pcap: return 3;
    case Interface::Icap: return 2;
    case Interface::Rbcrc: return 1;
    case Interface::None: return 0;
  }
  return 0;
}

}  // namespace

// --- Dram -------------------------------------------------------------------

std::uint8_t Dram::read_byte(Address a) const {
  const auto it = pages_.find(a >> kPageBits);
  return it == pages_.end() ? 0 : it->second[a & (kPageSize - 1)];
}

void Dram::write_byte(Address a, std::uint8_t v) {
  Page& page = pages_[a >> kPageBits];
  if (page.empty()) page.resize(kPageSize);
  page[a & (kPageSize - 1)] = v;
}

Word Dram::read_word(Address a) const {
  const Address offset = a & (kPageSize - 1);
  if (offset <= kPageSize - 4) {
    const auto it = pages_.find(a >> kPageBits);
    if (it == pages_.end()) return 0;
    const std::uint8_t* p = it->second.data() + offset;
    return Word{p[0]} | (Word{p[1]} << 8) | (Word{p[2]} << 16) | (Word{p[3]} << 24);
  }
  Word w = 0;
  for (unsigned i = 0; i < 4; ++i) w |= Word{read_byte(a + i)} << (8 * i);
  return w;
}

void Dram::write_word(Address a, Word v) {
  const Address offset = a & (kPageSize - 1);
  if (offset <= kPageSize - 4) {
    Page& page = pages_[a >> kPageBits];
    if (page.empty()) page.resize(kPageSize);
    std::uint8_t* p = page.data() + offset;
    for (unsigned i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return;
  }
  for (unsigned i = 0; i < 4; ++i) write_byte(a + i, static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<Word> Dram::read_words(Address a, std::size_t n) const {
  std::vector<Word> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = read_word(a + static_cast<Address>(4 * i));
  return out;
}

void Dram::write_words(Address a, std::span<const Word> words) {
  for (std::size_t i = 0; i < words.size(); ++i) write_word(a + static_cast<Address>(4 * i), words[i]);
}

void Dram::load_image(Address a, std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < bytes.size(); ++i) write_byte(a + static_cast<Address>(i), bytes[i]);
}

std::vector<std::uint8_t> Dram::store_image(Address a, std::size_t n) const {
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = read_byte(a + static_cast<Address>(i));
  return out;
}

void Dram::load_file(Address a, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  load_image(a, bytes);
}

void Dram::store_file(Address a, std::size_t n, const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const auto bytes = store_image(a, n);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// --- Arbitration ------------------------------------------------------------

const char* interface_name(Interface i) {
  switch (i) {
    case Interface::None: return "NONE";
    case Interface::Jtag: return "JTAG";
    case Interface::Pcap: return "PCAP";
    case Interface::Icap: return "ICAP";
    case Interface::Rbcrc: return "RBCRC";
  }
  return "?";
}

std::string ArbitrationEvent::to_string() const {
  const char* k = "?";
  switch (kind) {
    case Kind::Granted: k = "granted"; break;
    case Kind::Preempted: k = "preempted"; break;
    case Kind::Ignored: k = "ignored"; break;
    case Kind::Released: k = "released"; break;
    case Kind::AlreadyOwner: k = "already-owner"; break;
  }
  return fmt::format("{} requester={} previous={}", k, interface_name(requester), interface_name(previous));
}

ArbitrationEvent Arbiter::acquire(Interface requester) {
  using K = ArbitrationEvent::Kind;
  const Interface prev = owner_;
  if (requester == Interface::None) return {K::Ignored, requester, prev};
  if (prev == requester) return {K::AlreadyOwner, requester, prev};
  if (prev == Interface::None) {
    owner_ = requester;
    return {K::Granted, requester, prev};
  }
  if (requester != Interface::Rbcrc && priority(requester) > priority(prev)) {
    owner_ = requester;
    return {K::Preempted, requester, prev};
  }
  return {K::Ignored, requester, prev};
}

std::optional<ArbitrationEvent> Arbiter::release_on_desync() {
  if (owner_ == Interface::None) return std::nullopt;
  const Interface prev = owner_;
  owner_ = Interface::None;
  return ArbitrationEvent{ArbitrationEvent::Kind::Released, prev, prev};
}

// --- Device -----------------------------------------------------------------

const char* phase_name(InitPhase p) {
  switch (p) {
    case InitPhase::Locked: return "Locked";
    case InitPhase::PowerOk: return "PowerOk";
    case InitPhase::InitDone: return "InitDone";
    case InitPhase::PcapSelected: return "PcapSelected";
    case InitPhase::CfgDone: return "CfgDone";
  }
  return "?";
}

const char* transfer_error_name(TransferErrorKind k) {
  switch (k) {
    case TransferErrorKind::None: return "none";
    case TransferErrorKind::NotOwner: return "not-owner";
    case TransferErrorKind::WidthMismatch: return "width-mismatch";
    case TransferErrorKind::BoundaryViolation: return "boundary-violation";
    case TransferErrorKind::FifoOverflow: return "fifo-overflow";
    case TransferErrorKind::ConfigError: return "config-error";
    case TransferErrorKind::Injected: return "injected";
  }
  return "?";
}

Device::Device(fabric::DeviceGeometry geometry, Word device_id)
    : engine_(std::move(geometry), device_id) {}

void Device::log(const char* source, const std::string& kind, const std::string& detail) {
  if (!logging_) return;
  log_.push_back(fmt::format("{}\t{}\t{}\t{}", log_seq_++, source, kind, detail));
}

void Device::unlock(Word key) {
  if (key != kUnlockKey) {
    log("devc", "unlock-rejected", fmt::format("key=0x{:08x}", key));
    throw LockedError(fmt::format("wrong unlock key 0x{:08x}", key));
  }
  regs_.locked = false;
  log("devc", "unlocked", "");
}

void Device::write_register(DevcReg reg, Word value) {
  if (regs_.locked) {
    log("devc", "write-ignored", fmt::format("reg={} value=0x{:08x}", static_cast<int>(reg), value));
    return;
  }
  switch (reg) {
    case DevcReg::Ctrl:
      regs_.ctrl.pcap_pr = (value & kCtrlPcapPr) != 0;
      regs_.ctrl.pcap_mode = (value & kCtrlPcapMode) != 0;
      regs_.ctrl.loopback = (value & kCtrlLoopback) != 0;
      break;
    case DevcReg::DmaSrc: regs_.dma_src = value; break;
    case DevcReg::DmaDst: regs_.dma_dst = value; break;
    case DevcReg::DmaSrcLen: regs_.dma_src_len = value; break;
    case DevcReg::DmaDstLen: {
      regs_.dma_dst_len = value;
      if (phase_ != InitPhase::CfgDone) {
        throw SequencingError(fmt::format("not initialized (phase {})", phase_name(phase_)));
      }
      const bool src_pl = regs_.dma_src == kPlAddress;
      const bool dst_pl = regs_.dma_dst == kPlAddress;
      if (src_pl == dst_pl) {
        throw DescriptorError("exactly one of source and destination must be the PL address");
      }
      queue_.push_back({regs_.dma_src, regs_.dma_dst, regs_.dma_src_len, regs_.dma_dst_len,
                        dst_pl ? Direction::PsToPl : Direction::PlToPs});
      log("dma", "queued",
          fmt::format("src=0x{:08x} dst=0x{:08x} src_len={} dst_len={}", regs_.dma_src,
                      regs_.dma_dst, regs_.dma_src_len, regs_.dma_dst_len));
      break;
    }
  }
}

void Device::wait_for_power() {
  if (regs_.locked) throw LockedError("DevC is locked");
  if (phase_ != InitPhase::Locked) throw SequencingError("power-on already observed");
  phase_ = InitPhase::PowerOk;
  log("init", "phase", phase_name(phase_));
}

void Device::wait_for_init() {
  if (phase_ != InitPhase::PowerOk) throw SequencingError("PL init requires PowerOk");
  phase_ = InitPhase::InitDone;
  log("init", "phase", phase_name(phase_));
}

void Device::select_pcap() {
  if (phase_ != InitPhase::InitDone) throw SequencingError("PCAP select requires InitDone");
  if (!regs_.ctrl.pcap_pr || !regs_.ctrl.pcap_mode) {
    throw SequencingError("CTRL[PCAP_PR] and CTRL[PCAP_MODE] must be set to select PCAP");
  }
  phase_ = InitPhase::PcapSelected;
  log("init", "phase", phase_name(phase_));
}

void Device::wait_cfg_done() {
  if (phase_ != InitPhase::PcapSelected) throw SequencingError("CFG done requires PcapSelected");
  phase_ = InitPhase::CfgDone;
  log("init", "phase", phase_name(phase_));
}

void Device::pl_initialize() {
  if (regs_.locked) throw LockedError("DevC is locked");
  if (phase_ == InitPhase::Locked) wait_for_power();
  if (phase_ == InitPhase::PowerOk) wait_for_init();
  if (phase_ == InitPhase::InitDone) select_pcap();
  if (phase_ == InitPhase::PcapSelected) wait_cfg_done();
}

void Device::bring_up() {
  unlock(kUnlockKey);
  write_register(DevcReg::Ctrl, kCtrlPcapPr | kCtrlPcapMode);
  pl_initialize();
}

void Device::set_pcap_clock_divisor(unsigned divisor) {
  if (divisor == 0) throw RangeError("PCAP clock divisor must be >= 1");
  divisor_ = divisor;
  log("slcr", "pcap-divisor", fmt::format("div={} clock_mhz={}", divisor, pcap_clock_mhz()));
}

void Device::dma_enqueue(Address src, Address dst, Word src_len, Word dst_len) {
  if (regs_.locked) throw LockedError("DevC is locked");
  if (phase_ != InitPhase::CfgDone) {
    throw SequencingError(fmt::format("not initialized (phase {})", phase_name(phase_)));
  }
  write_register(DevcReg::DmaSrc, src);
  write_register(DevcReg::DmaDst, dst);
  write_register(DevcReg::DmaSrcLen, src_len);
  write_register(DevcReg::DmaDstLen, dst_len);
}

DmaResult Device::fail(DmaResult r, TransferErrorKind kind, std::string message) {
  r.error = kind;
  r.message = std::move(message);
  r.words_moved = 0;
  regs_.int_sts.dma_done = false;
  regs_.int_sts.pcap_done = false;
  if (kind == TransferErrorKind::ConfigError) {
    regs_.int_sts.cfg_error = true;
  } else {
    regs_.int_sts.dma_error = true;
  }
  log("dma", "error", fmt::format("{}: {}", transfer_error_name(kind), r.message));
  return r;
}

void Device::account(std::size_t words) {
  const std::uint64_t bytes = std::uint64_t{words} * 4;
  bytes_moved_ += bytes;
  simulated_seconds_ += static_cast<double>(bytes) / (kPcapBytesPerSecond / divisor_);
}

DmaResult Device::dma_process() {
  if (queue_.empty()) throw SequencingError("no DMA descriptor queued");
  const DmaDescriptor d = queue_.front();
  queue_.pop_front();
  DmaResult r;

  regs_.int_sts = {};
  if (arbiter_.owner() != Interface::Pcap) {
    const ArbitrationEvent ev = interface_acquire(Interface::Pcap);
    if (arbiter_.owner() != Interface::Pcap) {
      return fail(std::move(r), TransferErrorKind::NotOwner,
                  fmt::format("configuration interface owned by {} ({})",
                              interface_name(arbiter_.owner()), ev.to_string()));
    }
  }
  if (fault_hook_ && fault_hook_(d)) {
    return fail(std::move(r), TransferErrorKind::Injected, "forced by fault hook");
  }
  if (d.src_len != d.dst_len) {
    return fail(std::move(r), TransferErrorKind::WidthMismatch,
                fmt::format("src_len {} != dst_len {}", d.src_len, d.dst_len));
  }

  if (d.direction == Direction::PsToPl) {
    const std::vector<Word> words = dram_.read_words(d.src, d.src_len);
    if (regs_.ctrl.loopback) {
      pl_output_ = words;
    } else {
      fabric::ExecResult ex = engine_.execute(words);
      r.engine_events = ex.events;
      if (const fabric::EngineEvent* e = ex.first_error()) {
        return fail(std::move(r), TransferErrorKind::ConfigError, e->to_string());
      }
      if (!ex.readback.empty()) {
        if (!pl_output_.empty()) {
          log("pcap", "stale-readback-discarded", fmt::format("words={}", pl_output_.size()));
        }
        pl_output_ = std::move(ex.readback);
      }
      if (logging_) {
        for (const auto& e : r.engine_events) log("engine", fabric::event_name(e.kind), e.to_string());
      }
      if (ex.desynced()) interface_release_on_desync();
    }
  } else {
    const std::size_t n = d.dst_len;
    if (n > kMaxReadbackWords) {
      return fail(std::move(r), TransferErrorKind::BoundaryViolation,
                  fmt::format("{} words ({} bytes) crosses the 4 KB DMA boundary", n, n * 4));
    }
    if (n * 4 > kRxFifoBytes && divisor_ < kSafeDivisor) {
      return fail(std::move(r), TransferErrorKind::FifoOverflow,
                  fmt::format("{} bytes overflow the {}-byte receive FIFO at {} MHz", n * 4,
                              kRxFifoBytes, pcap_clock_mhz()));
    }
    if (pl_output_.size() != n) {
      return fail(std::move(r), TransferErrorKind::WidthMismatch,
                  fmt::format("read-back has {} words, transfer requests {}", pl_output_.size(), n));
    }
    const std::size_t capacity = kRxFifoBytes / 4;
    Address dst = d.dst;
    for (std::size_t i = 0; i < n;) {
      const std::size_t chunk = std::min(capacity, n - i);
      rx_fifo_.insert(rx_fifo_.end(), pl_output_.begin() + static_cast<std::ptrdiff_t>(i),
                      pl_output_.begin() + static_cast<std::ptrdiff_t>(i + chunk));
      while (!rx_fifo_.empty()) {
        dram_.write_word(dst, rx_fifo_.front());
        rx_fifo_.pop_front();
        dst += 4;
      }
      i += chunk;
    }
    pl_output_.clear();
  }

  r.words_moved = d.src_len;
  account(r.words_moved);
  regs_.int_sts.dma_done = true;
  regs_.int_sts.pcap_done = true;
  log("dma", "done",
      fmt::format("dir={} words={}", d.direction == Direction::PsToPl ? "ps->pl" : "pl->ps", r.words_moved));
  return r;
}

void Device::send_to_pl(Address src, std::size_t words) {
  dma_enqueue(src, kPlAddress, static_cast<Word>(words), static_cast<Word>(words));
  DmaResult r = dma_process();
  if (!r.ok()) throw TransferError(r.error, r.message);
}

void Device::receive_from_pl(Address dst, std::size_t words) {
  dma_enqueue(kPlAddress, dst, static_cast<Word>(words), static_cast<Word>(words));
  DmaResult r = dma_process();
  if (!r.ok()) throw TransferError(r.error, r.message);
}

ArbitrationEvent Device::interface_acquire(Interface who) {
  const ArbitrationEvent ev = arbiter_.acquire(who);
  log("arbiter", "acquire", ev.to_string());
  return ev;
}

std::optional<ArbitrationEvent> Device::interface_release_on_desync() {
  auto ev = arbiter_.release_on_desync();
  if (ev) log("arbiter", "release", ev->to_string());
  return ev;
}

}  // namespace idfsim::devc
