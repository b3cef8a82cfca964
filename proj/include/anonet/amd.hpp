// Algebraic manipulation detection code over GF(2^gamma).
//
// A message M of m bits is encoded as (M, theta, tau) where theta is a
// gamma-bit random block and tau = F(M, theta) is a gamma-bit tag:
//
//   F(M, theta) = theta^(d+2) + sum_{i=1..d} mu[i-1] * theta^i
//
// with M split into d chunks of gamma bits (zero-padded) and everything
// evaluated in GF(2^gamma). Additive tampering of the codeword escapes
// detection with probability at most (d+1)/2^gamma <= 2^-beta over the
// choice of theta.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "anonet/common.hpp"
#include "anonet/gf2.hpp"

namespace anonet::amd {

struct AmdParams {
  int m;          // message length, bits
  int beta;       // security parameter
  int d;          // chunk count, odd
  int gamma;      // tag length, bits
  gf2::FieldCtx ctx;

  int encoded_bits() const { return m + 2 * gamma; }
};

namespace detail {

// d*(beta + log2(d+1)) >= m, with an exact integer path when d+1 is a
// power of two (the only case where the left side can equal m exactly).
inline bool chunk_inequality_holds(long long d, int beta, long long m) {
  unsigned long long dp1 = (unsigned long long)d + 1;
  if ((dp1 & (dp1 - 1)) == 0) {
    long long k = std::countr_zero(dp1);
    return d * (beta + k) >= m;
  }
  long double lhs = (long double)d * ((long double)beta + std::log2l((long double)dp1));
  return lhs >= (long double)m;
}

inline int tag_width(long long d, int beta) {
  // ceil(beta + log2(d+1)); exact when d+1 is a power of two, otherwise
  // the value is irrational and ceil = floor + 1.
  unsigned long long dp1 = (unsigned long long)d + 1;
  if ((dp1 & (dp1 - 1)) == 0) return beta + std::countr_zero(dp1);
  long double v = (long double)beta + std::log2l((long double)dp1);
  return int(v) + 1;  // truncation == floor for positive v; v is irrational here
}

}  // namespace detail

/// Smallest odd d with d*(beta + log2(d+1)) >= m, and the matching tag
/// width gamma = ceil(beta + log2(d+1)). The field modulus defaults to
/// the canonical smallest irreducible of degree gamma; pass `modulus`
/// to use an agreed global parameter instead.
inline AmdParams derive_params(int m, int beta,
                               std::optional<gf2::BinPoly> modulus = {}) {
  if (m < 1) throw ConfigError("derive_params: m must be >= 1");
  if (beta < 1) throw ConfigError("derive_params: beta must be >= 1");

  long long d = 1;
  while (!detail::chunk_inequality_holds(d, beta, m)) d += 2;
  int gamma = detail::tag_width(d, beta);
  if ((long long)d * gamma < m)
    throw std::logic_error("derive_params: d*gamma < m");  // cannot happen

  gf2::FieldCtx ctx = modulus ? gf2::FieldCtx::with_modulus(*modulus)
                              : gf2::FieldCtx::canonical(gamma);
  if (ctx.gamma() != gamma)
    throw ConfigError("derive_params: modulus degree does not match gamma");
  return AmdParams{m, beta, int(d), gamma, std::move(ctx)};
}

/// The tag function F. mu must be params.m bits, theta params.gamma bits.
inline BitVec tag(const BitVec& mu, const BitVec& theta, const AmdParams& params) {
  if (int(mu.size()) != params.m) throw ConfigError("tag: mu length mismatch");
  if (int(theta.size()) != params.gamma) throw ConfigError("tag: theta length mismatch");

  const int gamma = params.gamma;
  const int d = params.d;

  // Pad with d*gamma - m zeros, split into d chunks of gamma bits,
  // each chunk an element of GF(2^gamma), MSB-first.
  BitVec padded = mu;
  padded.resize(std::size_t(d) * gamma, 0);
  const auto chunk_count = std::size_t(d);
  std::vector<gf2::BinPoly> chunk(chunk_count);
  for (int i = 0; i < d; ++i) {
    BitVec part(padded.begin() + std::ptrdiff_t(i) * gamma,
                padded.begin() + std::ptrdiff_t(i + 1) * gamma);
    chunk[std::size_t(i)] = gf2::BinPoly::from_coeff_bits(part);
  }
  gf2::BinPoly th = gf2::BinPoly::from_coeff_bits(theta);

  // sum_{i=1..d} mu[i-1]*theta^i by Horner, then the theta^(d+2) term.
  gf2::BinPoly acc;
  for (int i = d - 1; i >= 0; --i)
    acc = gf2::mul_mod(acc, th, params.ctx) + chunk[std::size_t(i)];
  acc = gf2::mul_mod(acc, th, params.ctx);
  gf2::BinPoly f = acc + gf2::pow_mod(th, std::uint64_t(d) + 2, params.ctx);

  return f.to_coeff_bits(gamma);
}

struct EncodedMessage {
  BitVec mu;     // the message block, m bits
  BitVec theta;  // random block, gamma bits
  BitVec tau;    // tag F(mu, theta), gamma bits

  /// Concatenated codeword of m + 2*gamma bits.
  BitVec bits() const {
    BitVec out = mu;
    out.insert(out.end(), theta.begin(), theta.end());
    out.insert(out.end(), tau.begin(), tau.end());
    return out;
  }
};

/// Encode with caller-supplied randomness (gamma bits), so protocol runs
/// are reproducible.
inline EncodedMessage encode(const BitVec& message, const AmdParams& params,
                             const BitVec& randomness) {
  if (int(message.size()) != params.m) throw ConfigError("encode: message length mismatch");
  if (int(randomness.size()) != params.gamma)
    throw ConfigError("encode: randomness must be gamma bits");
  return EncodedMessage{message, randomness, tag(message, randomness, params)};
}

/// Recompute the tag and compare. Returns the message when it matches,
/// std::nullopt when tampering is flagged.
inline std::optional<BitVec> decode(const BitVec& rho, const AmdParams& params) {
  if (int(rho.size()) != params.encoded_bits())
    throw ConfigError("decode: codeword length mismatch");
  const auto m = std::size_t(params.m);
  const auto gamma = std::size_t(params.gamma);
  BitVec mu(rho.begin(), rho.begin() + std::ptrdiff_t(m));
  BitVec theta(rho.begin() + std::ptrdiff_t(m), rho.begin() + std::ptrdiff_t(m + gamma));
  BitVec tau(rho.begin() + std::ptrdiff_t(m + gamma), rho.end());
  if (tag(mu, theta, params) != tau) return std::nullopt;
  return mu;
}

}  // namespace anonet::amd
