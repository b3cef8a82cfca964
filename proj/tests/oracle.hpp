// Independent reference implementations used only by tests.
//
// Polynomials here are plain coefficient vectors (index = power) with
// term-by-term schoolbook arithmetic, deliberately unlike the word-packed
// library representation. The AMD reference builds the entire tag
// polynomial unreduced in F2[x] and divides once at the end, so it shares
// no evaluation strategy with the production path it checks.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "anonet/common.hpp"
#include "anonet/gf2.hpp"

namespace oracle {

using Poly = std::vector<int>;  // Poly[k] = coefficient of x^k

inline int deg(const Poly& p) {
  for (int k = int(p.size()) - 1; k >= 0; --k)
    if (p[std::size_t(k)]) return k;
  return -1;
}

inline Poly add(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] ^= a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] ^= b[i];
  return r;
}

inline Poly mul(const Poly& a, const Poly& b) {
  if (deg(a) < 0 || deg(b) < 0) return {};
  Poly r(std::size_t(deg(a) + deg(b) + 1), 0);
  for (int i = 0; i <= deg(a); ++i) {
    if (!a[std::size_t(i)]) continue;
    for (int j = 0; j <= deg(b); ++j)
      if (b[std::size_t(j)]) r[std::size_t(i + j)] ^= 1;
  }
  return r;
}

inline Poly mod(Poly a, const Poly& m) {
  int dm = deg(m);
  for (int k = deg(a); k >= dm && dm >= 0; k = deg(a)) {
    int shift = k - dm;
    for (int j = 0; j <= dm; ++j)
      if (m[std::size_t(j)]) a[std::size_t(j + shift)] ^= 1;
  }
  return a;
}

/// Repeated multiplication, no square-and-multiply.
inline Poly pow_mod(const Poly& a, unsigned e, const Poly& m) {
  Poly acc{1};
  for (unsigned i = 0; i < e; ++i) acc = mod(mul(acc, a), m);
  return acc;
}

inline bool divides(const Poly& d, const Poly& p) { return deg(mod(p, d)) < 0; }

/// Every polynomial of exactly the given degree.
inline std::vector<Poly> all_of_degree(int degree) {
  std::vector<Poly> out;
  for (std::uint64_t low = 0; low < (1ull << degree); ++low) {
    Poly p(std::size_t(degree) + 1, 0);
    p[std::size_t(degree)] = 1;
    for (int k = 0; k < degree; ++k) p[std::size_t(k)] = int((low >> k) & 1);
    out.push_back(std::move(p));
  }
  return out;
}

/// Trial division by every polynomial of degree 1..deg/2.
inline bool irreducible_by_trial_division(const Poly& p) {
  int n = deg(p);
  if (n < 1) return false;
  for (int dd = 1; dd <= n / 2; ++dd)
    for (const Poly& cand : all_of_degree(dd))
      if (divides(cand, p)) return false;
  return true;
}

// -- adapters ---------------------------------------------------------------

inline Poly from_binpoly(const anonet::gf2::BinPoly& p) {
  Poly out(std::size_t(std::max(0, p.degree() + 1)), 0);
  for (int k = 0; k <= p.degree(); ++k) out[std::size_t(k)] = p.coeff(k) ? 1 : 0;
  return out;
}

inline anonet::gf2::BinPoly to_binpoly(const Poly& p) {
  anonet::gf2::BinPoly out;
  for (int k = 0; k <= deg(p); ++k)
    if (p[std::size_t(k)]) out.set_coeff(k);
  return out;
}

/// MSB-first bit block -> polynomial (first bit is the x^(len-1) term).
inline Poly poly_from_bits(const anonet::BitVec& bits) {
  Poly p(bits.size(), 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    p[bits.size() - 1 - i] = bits[i] ? 1 : 0;
  return p;
}

inline anonet::BitVec bits_from_poly(const Poly& p, int width) {
  anonet::BitVec bits(std::size_t(width), 0);
  for (int k = 0; k < width; ++k)
    if (k < int(p.size()) && p[std::size_t(k)]) bits[std::size_t(width - 1 - k)] = 1;
  return bits;
}

/// Reference AMD tag: F(mu, theta) = theta^(d+2) + sum_i mu^[i-1] theta^i,
/// accumulated unreduced and divided by b(x) once at the end.
inline anonet::BitVec amd_tag_reference(const anonet::BitVec& mu, const anonet::BitVec& theta,
                                        int d, int gamma, const Poly& modulus) {
  anonet::BitVec padded = mu;
  padded.resize(std::size_t(d) * std::size_t(gamma), 0);

  Poly th = poly_from_bits(theta);
  Poly f;  // zero
  // theta^(d+2), unreduced
  Poly th_pow{1};
  for (int i = 0; i < d + 2; ++i) th_pow = mul(th_pow, th);
  f = add(f, th_pow);
  for (int i = 1; i <= d; ++i) {
    anonet::BitVec chunk_bits(padded.begin() + std::ptrdiff_t(i - 1) * gamma,
                              padded.begin() + std::ptrdiff_t(i) * gamma);
    Poly chunk = poly_from_bits(chunk_bits);
    Poly term = chunk;
    for (int k = 0; k < i; ++k) term = mul(term, th);
    f = add(f, term);
  }
  return bits_from_poly(mod(f, modulus), gamma);
}

}  // namespace oracle
