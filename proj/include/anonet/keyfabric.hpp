// Pairwise consume-once key stores: the stand-in for the QKD layer.
//
// For every unordered party pair there are two copies of a shared bit
// string (one per side). With mismatch rate r_e > 0 each bit of side B's
// copy is independently flipped, modelling residual QKD key errors. Bits
// are handed out strictly once per side, in order.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "anonet/common.hpp"

namespace anonet {

struct PairKey {
  PartyId a, b;  // a.v < b.v
  BitVec copy_a, copy_b;
  std::size_t cursor_a = 0, cursor_b = 0;

  std::size_t consumed() const { return std::max(cursor_a, cursor_b); }
};

class KeyFabric {
 public:
  static constexpr char kMagic[9] = "ANONFAB1";
  static constexpr std::uint32_t kVersion = 1;

  /// Deterministic in (n, bits_per_pair, r_e, seed): same inputs, same
  /// fabric, bit for bit. copy_b = copy_a with per-bit flips at rate r_e.
  static KeyFabric generate(int n, std::size_t bits_per_pair, double r_e,
                            std::uint64_t seed) {
    check_params(n, r_e);
    KeyFabric f(n, bits_per_pair, r_e, seed);
    Splitmix64 rng(seed);
    for (auto& pk : f.pairs_) {
      pk.copy_a.resize(bits_per_pair);
      pk.copy_b.resize(bits_per_pair);
      for (std::size_t i = 0; i < bits_per_pair; ++i)
        pk.copy_a[i] = Bit(rng.next() & 1);
      for (std::size_t i = 0; i < bits_per_pair; ++i)
        pk.copy_b[i] = pk.copy_a[i] ^ Bit(rng.next_unit() < r_e ? 1 : 0);
    }
    return f;
  }

  /// Fabric with explicitly chosen key material, identical on both sides.
  /// Pair order is lexicographic: (0,1), (0,2), ..., (n-2,n-1).
  static KeyFabric from_shared_bits(int n, const std::vector<BitVec>& per_pair) {
    check_params(n, 0.0);
    if (per_pair.size() != std::size_t(n) * (n - 1) / 2)
      throw ConfigError("from_shared_bits: need n(n-1)/2 pair strings");
    KeyFabric f(n, per_pair.empty() ? 0 : per_pair[0].size(), 0.0, 0);
    for (std::size_t i = 0; i < per_pair.size(); ++i) {
      if (per_pair[i].size() != f.bits_per_pair_)
        throw ConfigError("from_shared_bits: unequal pair lengths");
      f.pairs_[i].copy_a = per_pair[i];
      f.pairs_[i].copy_b = per_pair[i];
    }
    return f;
  }

  int n() const { return n_; }
  std::size_t bits_per_pair() const { return bits_per_pair_; }
  double error_rate() const { return r_e_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t pair_count() const { return pairs_.size(); }

  /// Next `count` fresh bits of the caller's copy for the {me, peer}
  /// store. Throws KeysDepleted when the store cannot cover the draw.
  BitVec draw_bits(PartyId me, PartyId peer, std::size_t count) {
    PairKey& pk = pairs_[pair_index(me, peer)];
    std::lock_guard<std::mutex> lock(*mu_);
    bool side_a = me.v < peer.v;
    std::size_t& cursor = side_a ? pk.cursor_a : pk.cursor_b;
    const BitVec& copy = side_a ? pk.copy_a : pk.copy_b;
    if (cursor + count > copy.size())
      throw KeysDepleted(pk.a, pk.b,
                         "key store {" + std::to_string(pk.a.v) + "," +
                             std::to_string(pk.b.v) + "} depleted: want " +
                             std::to_string(count) + ", have " +
                             std::to_string(copy.size() - cursor));
    BitVec out(copy.begin() + std::ptrdiff_t(cursor),
               copy.begin() + std::ptrdiff_t(cursor + count));
    cursor += count;
    return out;
  }

  /// Single-bit draw; equivalent to draw_bits(me, peer, 1)[0].
  Bit draw_bit(PartyId me, PartyId peer) {
    PairKey& pk = pairs_[pair_index(me, peer)];
    std::lock_guard<std::mutex> lock(*mu_);
    bool side_a = me.v < peer.v;
    std::size_t& cursor = side_a ? pk.cursor_a : pk.cursor_b;
    const BitVec& copy = side_a ? pk.copy_a : pk.copy_b;
    if (cursor >= copy.size())
      throw KeysDepleted(pk.a, pk.b,
                         "key store {" + std::to_string(pk.a.v) + "," +
                             std::to_string(pk.b.v) + "} depleted");
    return copy[cursor++];
  }

  /// Bits not yet consumed on the caller's side.
  std::size_t remaining(PartyId me, PartyId peer) const {
    const PairKey& pk = pairs_[pair_index(me, peer)];
    std::lock_guard<std::mutex> lock(*mu_);
    return bits_per_pair_ - (me.v < peer.v ? pk.cursor_a : pk.cursor_b);
  }

  /// Network-wide consumption: sum over pairs of bits consumed (the two
  /// sides of a pair advance in lockstep and count once).
  std::uint64_t total_consumed() const {
    std::lock_guard<std::mutex> lock(*mu_);
    std::uint64_t total = 0;
    for (const auto& pk : pairs_) total += pk.consumed();
    return total;
  }

  std::uint64_t consumed(PartyId x, PartyId y) const {
    std::lock_guard<std::mutex> lock(*mu_);
    return pairs_[pair_index(x, y)].consumed();
  }

  const PairKey& pair(PartyId x, PartyId y) const { return pairs_[pair_index(x, y)]; }

  // -- binary file format (layout documented in the README) ---------------

  void save(std::ostream& out) const {
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    write_u32(out, std::uint32_t(n_));
    write_u64(out, bits_per_pair_);
    std::uint64_t re_bits;
    static_assert(sizeof(double) == 8);
    std::memcpy(&re_bits, &r_e_, 8);
    write_u64(out, re_bits);
    write_u64(out, seed_);
    for (const auto& pk : pairs_) {
      write_u32(out, std::uint32_t(pk.a.v));
      write_u32(out, std::uint32_t(pk.b.v));
      auto pa = pack_bits_msb(pk.copy_a);
      auto pb = pack_bits_msb(pk.copy_b);
      out.write(reinterpret_cast<const char*>(pa.data()), std::streamsize(pa.size()));
      out.write(reinterpret_cast<const char*>(pb.data()), std::streamsize(pb.size()));
    }
    if (!out) throw SessionAborted("fabric write failed");
  }

  void save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SessionAborted("cannot open fabric file for writing: " + path);
    save(out);
  }

  static KeyFabric load(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
      throw ConfigError("not a fabric file (bad magic)");
    if (read_u32(in) != kVersion) throw ConfigError("unsupported fabric version");
    int n = int(read_u32(in));
    std::uint64_t len = read_u64(in);
    std::uint64_t re_bits = read_u64(in);
    double r_e;
    std::memcpy(&r_e, &re_bits, 8);
    std::uint64_t seed = read_u64(in);
    check_params(n, r_e);
    KeyFabric f(n, std::size_t(len), r_e, seed);
    std::size_t bytes = (std::size_t(len) + 7) / 8;
    std::vector<std::uint8_t> buf(bytes);
    for (auto& pk : f.pairs_) {
      auto a = read_u32(in), b = read_u32(in);
      if (int(a) != pk.a.v || int(b) != pk.b.v)
        throw ConfigError("fabric file: pair records out of order");
      in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(bytes));
      pk.copy_a = unpack_bits_msb(buf, std::size_t(len));
      in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(bytes));
      pk.copy_b = unpack_bits_msb(buf, std::size_t(len));
    }
    if (!in) throw ConfigError("fabric file truncated");
    return f;
  }

  static KeyFabric load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open fabric file: " + path);
    return load(in);
  }

 private:
  KeyFabric(int n, std::size_t bits_per_pair, double r_e, std::uint64_t seed)
      : n_(n), bits_per_pair_(bits_per_pair), r_e_(r_e), seed_(seed),
        mu_(std::make_unique<std::mutex>()) {
    pairs_.reserve(std::size_t(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        pairs_.push_back(PairKey{PartyId{i}, PartyId{j}, {}, {}, 0, 0});
  }

  static void check_params(int n, double r_e) {
    if (n < 3) throw ConfigError("party count must be >= 3");
    if (!(r_e >= 0.0 && r_e <= 1.0)) throw ConfigError("error rate must be in [0, 1]");
  }

  std::size_t pair_index(PartyId x, PartyId y) const {
    int i = std::min(x.v, y.v), j = std::max(x.v, y.v);
    if (i < 0 || j >= n_ || i == j) throw ConfigError("unknown pair");
    // lexicographic index of (i, j), i < j
    return std::size_t(i) * (2 * n_ - i - 1) / 2 + std::size_t(j - i - 1);
  }

  static void write_u32(std::ostream& out, std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                         std::uint8_t(v >> 8), std::uint8_t(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  static void write_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 7; i >= 0; --i) {
      std::uint8_t b = std::uint8_t(v >> (8 * i));
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
  static std::uint32_t read_u32(std::istream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  }
  static std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      std::uint8_t b;
      in.read(reinterpret_cast<char*>(&b), 1);
      v = (v << 8) | b;
    }
    return v;
  }

  int n_;
  std::size_t bits_per_pair_;
  double r_e_;
  std::uint64_t seed_;
  std::vector<PairKey> pairs_;
  mutable std::unique_ptr<std::mutex> mu_;  // serializes cursor movement
};

}  // namespace anonet
