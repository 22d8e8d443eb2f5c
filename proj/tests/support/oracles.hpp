#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's encoders.

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "idfsim/config_protocol.hpp"

namespace oracle {

using idfsim::Word;

inline std::string fixture(const std::string& name) { return std::string(IDFSIM_FIXTURES) + "/" + name; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Header layouts written out by hand.
inline Word type1(unsigned op, unsigned reg, unsigned count) {
  return (Word{1} << 29) | (Word{op} << 27) | (Word{reg} << 13) | Word{count};
}
inline Word type2(unsigned op, unsigned count) { return (Word{2} << 29) | (Word{op} << 27) | Word{count}; }

/// Hex words, one or more per line, `#` comments.
inline std::vector<Word> read_hex_words(const std::string& path) {
  std::istringstream in(read_text(path));
  std::vector<Word> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) out.push_back(static_cast<Word>(std::stoul(tok, nullptr, 16)));
  }
  return out;
}

inline std::vector<std::uint8_t> aes256_ecb(const std::array<std::uint8_t, 32>& key,
                                            const std::array<std::uint8_t, 16>& block, bool encrypt) {
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  std::vector<std::uint8_t> out(32);
  int len = 0;
  int total = 0;
  EVP_CipherInit_ex(ctx, EVP_aes_256_ecb(), nullptr, key.data(), nullptr, encrypt ? 1 : 0);
  EVP_CIPHER_CTX_set_padding(ctx, 0);
  EVP_CipherUpdate(ctx, out.data(), &len, block.data(), 16);
  total = len;
  EVP_CipherFinal_ex(ctx, out.data() + total, &len);
  total += len;
  EVP_CIPHER_CTX_free(ctx);
  out.resize(static_cast<std::size_t>(total));
  return out;
}

inline std::uint64_t fnv1a_be(const std::vector<Word>& words) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Word w : words) {
    for (int s = 24; s >= 0; s -= 8) {
      h ^= (w >> s) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

/// A random packet list that forms a valid stream: optional pre-sync words,
/// a sync, then packets. A DESYNC command, if drawn, ends the list.
inline std::vector<idfsim::proto::Packet> random_packets(std::mt19937_64& rng) {
  using idfsim::proto::Packet;
  using idfsim::proto::Register;
  using K = Packet::Kind;
  std::uniform_int_distribution<int> pick(0, 99);
  std::vector<Packet> out;
  const int pre = pick(rng) % 4;
  static constexpr K kPre[] = {K::Dummy, K::BusWidthSync, K::BusWidthDetect};
  for (int i = 0; i < pre; ++i) out.push_back(Packet::special(kPre[pick(rng) % 3]));
  out.push_back(Packet::special(K::Sync));
  static constexpr Register kRegs[] = {Register::CRC,  Register::FAR,  Register::FDRI, Register::FDRO,
                                       Register::CMD,  Register::CTL0, Register::MASK, Register::IDCODE};
  auto payload = [&](std::size_t n) {
    std::vector<Word> p(n);
    for (Word& w : p) w = static_cast<Word>(rng());
    return p;
  };
  const int n = pick(rng) % 12;
  for (int i = 0; i < n; ++i) {
    const int r = pick(rng);
    if (r < 15) {
      out.push_back(Packet::special(K::Noop));
    } else if (r < 45) {
      const Register reg = kRegs[pick(rng) % 8];
      std::vector<Word> p = payload(static_cast<std::size_t>(pick(rng) % 5));
      if (reg == Register::CMD && !p.empty() && p.back() == 0xD) p.back() = 0x1;
      out.push_back(Packet::type1_write(reg, std::move(p)));
    } else if (r < 65) {
      out.push_back(Packet::type1_read(kRegs[pick(rng) % 8], static_cast<std::uint32_t>(rng() % 2048)));
    } else if (r < 80) {
      out.push_back(Packet::type2_write(payload(static_cast<std::size_t>(pick(rng) % 303))));
    } else if (r < 95) {
      out.push_back(Packet::type2_read(static_cast<std::uint32_t>(rng() & ((1U << 27) - 1))));
    } else {
      out.push_back(Packet::type1_write(Register::CMD, {0xD}));
      const int tail = pick(rng) % 3;
      for (int t = 0; t < tail; ++t) out.push_back(Packet::special(pick(rng) % 2 ? K::Dummy : K::Noop));
      break;
    }
  }
  return out;
}

}  // namespace oracle
