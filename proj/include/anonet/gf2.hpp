// Binary polynomial arithmetic and GF(2^gamma) field contexts.
//
// Coefficient conventions: internally a polynomial stores bit k of word
// k/64 as the coefficient of x^k. All external encodings (bit strings,
// hex, text) are MSB-first: the first bit of a string is the highest
// coefficient.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "anonet/common.hpp"

namespace anonet::gf2 {

/// Polynomial over GF(2). Value type, always normalized (no leading zero
/// words). The zero polynomial has degree() == -1.
class BinPoly {
 public:
  BinPoly() = default;

  static BinPoly zero() { return BinPoly{}; }
  static BinPoly one() { return from_integer(1); }
  static BinPoly x() { return from_integer(2); }

  /// Bit k of `v` becomes the coefficient of x^k.
  static BinPoly from_integer(std::uint64_t v) {
    BinPoly p;
    if (v) p.w_.push_back(v);
    return p;
  }

  /// MSB-first coefficient bits; bits[0] is the coefficient of
  /// x^(bits.size()-1).
  static BinPoly from_coeff_bits(const BitVec& bits) {
    BinPoly p;
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) p.set_coeff(int(bits.size() - 1 - i));
    return p;
  }

  /// MSB-first coefficient bits, fixed width. Degree must be < width.
  BitVec to_coeff_bits(int width) const {
    if (degree() >= width)
      throw std::invalid_argument("to_coeff_bits: width too small");
    BitVec bits(std::size_t(width), 0);
    for (int k = 0; k < width; ++k)
      if (coeff(k)) bits[std::size_t(width - 1 - k)] = 1;
    return bits;
  }

  int degree() const {
    if (w_.empty()) return -1;
    std::uint64_t top = w_.back();
    int bit = 63;
    while (!(top & (1ull << bit))) --bit;
    return int(64 * (w_.size() - 1)) + bit;
  }

  bool is_zero() const { return w_.empty(); }

  bool coeff(int k) const {
    std::size_t word = std::size_t(k) / 64;
    if (word >= w_.size()) return false;
    return (w_[word] >> (k % 64)) & 1;
  }

  void set_coeff(int k) {
    std::size_t word = std::size_t(k) / 64;
    if (word >= w_.size()) w_.resize(word + 1, 0);
    w_[word] |= 1ull << (k % 64);
  }

  friend BinPoly operator+(const BinPoly& a, const BinPoly& b) {
    BinPoly r;
    r.w_.resize(std::max(a.w_.size(), b.w_.size()), 0);
    for (std::size_t i = 0; i < a.w_.size(); ++i) r.w_[i] ^= a.w_[i];
    for (std::size_t i = 0; i < b.w_.size(); ++i) r.w_[i] ^= b.w_[i];
    r.trim();
    return r;
  }

  /// Multiply by x^k.
  BinPoly shifted(int k) const {
    if (is_zero() || k == 0) return k >= 0 ? *this : BinPoly{};
    BinPoly r;
    int words = k / 64, bits = k % 64;
    r.w_.assign(w_.size() + std::size_t(words) + 1, 0);
    for (std::size_t i = 0; i < w_.size(); ++i) {
      r.w_[i + std::size_t(words)] ^= w_[i] << bits;
      if (bits) r.w_[i + std::size_t(words) + 1] ^= w_[i] >> (64 - bits);
    }
    r.trim();
    return r;
  }

  friend bool operator==(const BinPoly& a, const BinPoly& b) { return a.w_ == b.w_; }
  friend bool operator!=(const BinPoly& a, const BinPoly& b) { return !(a == b); }

  /// Ordering by integer value of the coefficient string.
  friend bool operator<(const BinPoly& a, const BinPoly& b) {
    if (a.w_.size() != b.w_.size()) return a.w_.size() < b.w_.size();
    for (std::size_t i = a.w_.size(); i-- > 0;)
      if (a.w_[i] != b.w_[i]) return a.w_[i] < b.w_[i];
    return false;
  }

 private:
  void trim() {
    while (!w_.empty() && w_.back() == 0) w_.pop_back();
  }
  std::vector<std::uint64_t> w_;
};

/// Schoolbook carry-less multiplication. Fine for gamma <= 64.
inline BinPoly mul(const BinPoly& a, const BinPoly& b) {
  BinPoly acc;
  for (int k = 0; k <= b.degree(); ++k)
    if (b.coeff(k)) acc = acc + a.shifted(k);
  return acc;
}

/// Long division: a = q*m + r with deg(r) < deg(m).
inline std::pair<BinPoly, BinPoly> divmod(const BinPoly& a, const BinPoly& m) {
  if (m.is_zero()) throw std::invalid_argument("divmod by zero polynomial");
  BinPoly q, r = a;
  int dm = m.degree();
  while (r.degree() >= dm) {
    int shift = r.degree() - dm;
    q.set_coeff(shift);
    r = r + m.shifted(shift);
  }
  return {q, r};
}

inline BinPoly mod(const BinPoly& a, const BinPoly& m) { return divmod(a, m).second; }

inline BinPoly gcd(BinPoly a, BinPoly b) {
  while (!b.is_zero()) {
    BinPoly r = mod(a, b);
    a = std::move(b);
    b = std::move(r);
  }
  return a;
}

namespace detail {

inline BinPoly mulmod_raw(const BinPoly& a, const BinPoly& b, const BinPoly& m) {
  return mod(mul(a, b), m);
}

inline std::vector<int> prime_factors(int n) {
  std::vector<int> out;
  for (int p = 2; p * p <= n; ++p) {
    if (n % p) continue;
    out.push_back(p);
    while (n % p == 0) n /= p;
  }
  if (n > 1) out.push_back(n);
  return out;
}

}  // namespace detail

/// Rabin's irreducibility criterion: b of degree n is irreducible over
/// GF(2) iff x^(2^n) == x (mod b) and gcd(x^(2^(n/q)) - x, b) = 1 for
/// every prime q dividing n.
inline bool is_irreducible(const BinPoly& b) {
  int n = b.degree();
  if (n < 1) return false;
  if (n == 1) return true;  // x and x+1

  auto factors = detail::prime_factors(n);
  std::vector<int> checkpoints;
  for (int q : factors) checkpoints.push_back(n / q);

  BinPoly h = mod(BinPoly::x(), b);
  for (int k = 1; k <= n; ++k) {
    h = detail::mulmod_raw(h, h, b);  // h = x^(2^k) mod b
    for (int cp : checkpoints)
      if (k == cp && !(gcd(h + BinPoly::x(), b) == BinPoly::one())) return false;
    if (k == n && !(h == mod(BinPoly::x(), b))) return false;
  }
  return true;
}

/// The irreducible polynomial of degree gamma whose coefficient string,
/// read as an integer, is smallest. Deterministic canonical choice.
inline BinPoly find_irreducible(int gamma) {
  if (gamma < 1 || gamma > 62)
    throw ConfigError("find_irreducible: degree out of supported range");
  for (std::uint64_t v = 1ull << gamma; v < (2ull << gamma); ++v) {
    BinPoly cand = BinPoly::from_integer(v);
    if (is_irreducible(cand)) return cand;
  }
  throw std::logic_error("find_irreducible: no polynomial found");  // unreachable
}

/// Reduction context for GF(2^gamma): an irreducible modulus b(x) of
/// degree gamma. Session-wide global parameter.
class FieldCtx {
 public:
  /// Canonical context: smallest irreducible modulus of the degree.
  static FieldCtx canonical(int gamma) { return FieldCtx(gamma, find_irreducible(gamma)); }

  /// Context over an explicitly supplied modulus (e.g. the conventional
  /// x^22+x+1). Rejects reducible or wrong-degree polynomials.
  static FieldCtx with_modulus(const BinPoly& modulus) {
    int gamma = modulus.degree();
    if (gamma < 1) throw ConfigError("FieldCtx: modulus must have degree >= 1");
    if (!is_irreducible(modulus)) throw ConfigError("FieldCtx: modulus is reducible");
    return FieldCtx(gamma, modulus);
  }

  int gamma() const { return gamma_; }
  const BinPoly& modulus() const { return modulus_; }

 private:
  FieldCtx(int gamma, BinPoly modulus) : gamma_(gamma), modulus_(std::move(modulus)) {}
  int gamma_;
  BinPoly modulus_;
};

/// Field addition is plain XOR; provided for symmetry.
inline BinPoly add(const BinPoly& a, const BinPoly& b) { return a + b; }

inline BinPoly mul_mod(const BinPoly& a, const BinPoly& b, const FieldCtx& ctx) {
  return mod(mul(a, b), ctx.modulus());
}

/// Square-and-multiply; a^0 = 1.
inline BinPoly pow_mod(BinPoly a, std::uint64_t e, const FieldCtx& ctx) {
  BinPoly acc = BinPoly::one();
  a = mod(a, ctx.modulus());
  while (e) {
    if (e & 1) acc = mul_mod(acc, a, ctx);
    a = mul_mod(a, a, ctx);
    e >>= 1;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Textual and hex forms

/// "x^22+x+1" style. Zero prints as "0".
inline std::string format_poly(const BinPoly& p) {
  if (p.is_zero()) return "0";
  std::string s;
  for (int k = p.degree(); k >= 0; --k) {
    if (!p.coeff(k)) continue;
    if (!s.empty()) s += "+";
    if (k == 0)
      s += "1";
    else if (k == 1)
      s += "x";
    else
      s += "x^" + std::to_string(k);
  }
  return s;
}

inline BinPoly parse_poly(const std::string& text) {
  BinPoly p;
  std::size_t i = 0;
  if (text == "0") return p;
  while (i < text.size()) {
    std::size_t j = text.find('+', i);
    if (j == std::string::npos) j = text.size();
    std::string term = text.substr(i, j - i);
    if (term == "1") {
      p.set_coeff(0);
    } else if (term == "x") {
      p.set_coeff(1);
    } else if (term.rfind("x^", 0) == 0) {
      p.set_coeff(std::stoi(term.substr(2)));
    } else {
      throw std::invalid_argument("parse_poly: bad term '" + term + "'");
    }
    i = j + 1;
  }
  return p;
}

/// Hex form of the full coefficient string, MSB-first (x^22+x+1 -> "400003").
inline std::string poly_to_hex(const BinPoly& p) {
  if (p.is_zero()) return "0";
  return bits_to_hex(p.to_coeff_bits(p.degree() + 1));
}

inline BinPoly poly_from_hex(const std::string& hex) {
  BitVec bits = bits_from_hex(hex, hex.size() * 4);
  return BinPoly::from_coeff_bits(bits);
}

}  // namespace anonet::gf2
