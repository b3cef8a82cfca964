// Shared primitive types for the anonet library: bits, bit strings,
// party identifiers, deterministic randomness, and error types.
#pragma once

#include <cstdint>
#include <cstddef>
#include <compare>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anonet {

using Bit = std::uint8_t;  // always 0 or 1

// One bit per element. Index 0 is the first (leftmost) bit of the string.
using BitVec = std::vector<Bit>;

/// Index of a participant within a session, in [0, n).
struct PartyId {
  int v = -1;
  auto operator<=>(const PartyId&) const = default;
};

inline Bit parity_of(const BitVec& bits) {
  Bit p = 0;
  for (Bit b : bits) p ^= (b & 1);
  return p;
}

inline BitVec xor_bits(const BitVec& a, const BitVec& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("xor_bits: length mismatch");
  BitVec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] ^ b[i]) & 1;
  return out;
}

inline std::string bits_to_string(const BitVec& bits) {
  std::string s;
  s.reserve(bits.size());
  for (Bit b : bits) s.push_back(b ? '1' : '0');
  return s;
}

inline BitVec bits_from_string(const std::string& s) {
  BitVec out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '0')
      out.push_back(0);
    else if (c == '1')
      out.push_back(1);
    else
      throw std::invalid_argument("bits_from_string: bad character");
  }
  return out;
}

// Hex form of a bit string: the string is read MSB-first as an integer
// (first bit is the most significant) and printed with ceil(len/4) digits.
inline std::string bits_to_hex(const BitVec& bits) {
  if (bits.empty()) return "0";
  std::size_t digits = (bits.size() + 3) / 4;
  std::string s(digits, '0');
  // walk from the last bit (least significant) upwards
  for (std::size_t i = 0; i < bits.size(); ++i) {
    std::size_t pos = bits.size() - 1 - i;  // significance of bits[pos] is 2^i
    if (!bits[pos]) continue;
    std::size_t digit = digits - 1 - i / 4;
    int cur = s[digit] <= '9' ? s[digit] - '0' : s[digit] - 'a' + 10;
    cur |= 1 << (i % 4);
    s[digit] = cur < 10 ? char('0' + cur) : char('a' + cur - 10);
  }
  return s;
}

inline BitVec bits_from_hex(const std::string& hex, std::size_t len) {
  BitVec out(len, 0);
  std::size_t i = 0;  // significance counter
  for (auto it = hex.rbegin(); it != hex.rend(); ++it) {
    char c = *it;
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      v = c - 'A' + 10;
    else
      throw std::invalid_argument("bits_from_hex: bad digit");
    for (int k = 0; k < 4; ++k, ++i) {
      if (!(v & (1 << k))) continue;
      if (i >= len) throw std::invalid_argument("bits_from_hex: value wider than len");
      out[len - 1 - i] = 1;
    }
    if (i >= len && it + 1 != hex.rend()) {
      // remaining digits must all be zero
      for (auto jt = it + 1; jt != hex.rend(); ++jt)
        if (*jt != '0') throw std::invalid_argument("bits_from_hex: value wider than len");
      break;
    }
  }
  return out;
}

// Pack bits into bytes, MSB-first within each byte; the tail byte is
// zero-padded on the right. Used by the fabric file format.
inline std::vector<std::uint8_t> pack_bits_msb(const BitVec& bits) {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= std::uint8_t(0x80u >> (i % 8));
  return out;
}

inline BitVec unpack_bits_msb(const std::vector<std::uint8_t>& bytes, std::size_t len) {
  if (bytes.size() < (len + 7) / 8)
    throw std::invalid_argument("unpack_bits_msb: buffer too small");
  BitVec out(len);
  for (std::size_t i = 0; i < len; ++i)
    out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1;
  return out;
}

// ---------------------------------------------------------------------------
// Errors

/// Invalid parameters or configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A pairwise key store ran out of bits; the enclosing protocol must abort.
struct KeysDepleted : std::runtime_error {
  PartyId a, b;
  KeysDepleted(PartyId a_, PartyId b_, const std::string& what)
      : std::runtime_error(what), a(a_), b(b_) {}
};

/// A participant failed to announce within the round (silent or timed out).
struct RefusedToBroadcast : std::runtime_error {
  PartyId party;
  explicit RefusedToBroadcast(PartyId p)
      : std::runtime_error("party " + std::to_string(p.v) + " refused to broadcast"),
        party(p) {}
};

/// A revealed bit did not match its commitment.
struct CommitmentMismatch : std::runtime_error {
  PartyId party;
  explicit CommitmentMismatch(PartyId p)
      : std::runtime_error("commitment mismatch from party " + std::to_string(p.v)),
        party(p) {}
};

/// The session was torn down (peer abort, transport failure).
struct SessionAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Deterministic randomness

/// splitmix64: tiny, portable, deterministic in its seed.
class Splitmix64 {
 public:
  explicit Splitmix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_unit() { return double(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Stream of random bits. Protocol code takes one of these so tests can
/// substitute scripted sequences for exhaustive enumeration.
class BitSource {
 public:
  virtual ~BitSource() = default;
  virtual Bit next_bit() = 0;

  BitVec next_bits(std::size_t count) {
    BitVec out(count);
    for (auto& b : out) b = next_bit();
    return out;
  }
};

class SplitmixBits final : public BitSource {
 public:
  explicit SplitmixBits(std::uint64_t seed) : rng_(seed) {}
  Bit next_bit() override {
    if (left_ == 0) {
      buf_ = rng_.next();
      left_ = 64;
    }
    Bit b = Bit(buf_ & 1);
    buf_ >>= 1;
    --left_;
    return b;
  }

 private:
  Splitmix64 rng_;
  std::uint64_t buf_ = 0;
  int left_ = 0;
};

/// Fixed bit sequence; throws when exhausted. Test-only in spirit.
class ScriptedBits final : public BitSource {
 public:
  explicit ScriptedBits(BitVec bits) : bits_(std::move(bits)) {}
  Bit next_bit() override {
    if (pos_ >= bits_.size())
      throw std::logic_error("ScriptedBits exhausted");
    return bits_[pos_++] & 1;
  }
  std::size_t consumed() const { return pos_; }

 private:
  BitVec bits_;
  std::size_t pos_ = 0;
};

}  // namespace anonet
