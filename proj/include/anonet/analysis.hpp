// Closed-form performance and error formulas, plus the budget report
// comparing them against instrumented key consumption.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "anonet/amd.hpp"
#include "anonet/common.hpp"

namespace anonet::analysis {

enum class Protocol { broadcast, veto, notification, collision, message };

inline const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::broadcast: return "broadcast";
    case Protocol::veto: return "veto";
    case Protocol::notification: return "notification";
    case Protocol::collision: return "collision";
    case Protocol::message: return "message";
  }
  return "?";
}

inline std::optional<Protocol> protocol_from_name(const std::string& s) {
  for (Protocol p : {Protocol::broadcast, Protocol::veto, Protocol::notification,
                     Protocol::collision, Protocol::message})
    if (s == protocol_name(p)) return p;
  return std::nullopt;
}

/// Probability that the broadcast parity is wrong when, given one speaker,
/// every other party independently also speaks with probability p:
/// P = 1/2 - 1/2 (1-2p)^(n-1), the odd-collision mass.
inline double collision_prob(double p, int n) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("collision_prob: p in [0,1]");
  if (n < 2) throw ConfigError("collision_prob: n >= 2");
  return 0.5 - 0.5 * std::pow(1.0 - 2.0 * p, n - 1);
}

/// Per-round parity error under per-key mismatch rate r_e:
/// E = 1/2 [1 - (1-2 r_e)^(n(n-1)/2)], the odd-error mass over all links.
inline double parity_error_rate(double r_e, int n) {
  if (!(r_e >= 0.0 && r_e <= 1.0)) throw ConfigError("parity_error_rate: r_e in [0,1]");
  if (n < 2) throw ConfigError("parity_error_rate: n >= 2");
  double links = double(n) * (n - 1) / 2.0;
  return 0.5 * (1.0 - std::pow(1.0 - 2.0 * r_e, links));
}

/// Residual error of the length-N repetition code (majority vote), which
/// corrects up to d = (N-1)/2 wrong rounds:
/// E' = sum_{i=d+1}^{N} C(N,i) E^i (1-E)^(N-i).
inline double repetition_residual(double error, int n_reps) {
  if (!(error >= 0.0 && error <= 1.0)) throw ConfigError("repetition_residual: E in [0,1]");
  if (n_reps < 1 || n_reps % 2 == 0)
    throw ConfigError("repetition_residual: N must be odd and >= 1");
  int d = (n_reps - 1) / 2;
  double sum = 0.0;
  for (int i = d + 1; i <= n_reps; ++i) {
    double binom = std::exp(std::lgamma(n_reps + 1) - std::lgamma(i + 1) -
                            std::lgamma(n_reps - i + 1));
    sum += binom * std::pow(error, i) * std::pow(1.0 - error, n_reps - i);
  }
  return sum;
}

/// Key budget of a protocol execution. `table_bits` is the published
/// closed form (for message transmission a bound that counts each
/// broadcast round as one bit and uses log2(m)); `exact_bits` is the
/// instrumented cost of an honest full-length run, counting every key
/// bit consumed network-wide.
struct KeyBudget {
  double table_bits = 0;
  std::uint64_t exact_bits = 0;
};

inline KeyBudget key_budget(Protocol proto, int n, int beta, std::optional<int> m = {}) {
  if (n < 3) throw ConfigError("key_budget: n >= 3");
  if (beta < 1) throw ConfigError("key_budget: beta >= 1");
  const std::uint64_t un = std::uint64_t(n);
  const std::uint64_t pairs = un * (un - 1) / 2;
  const std::uint64_t ub = std::uint64_t(beta);
  switch (proto) {
    case Protocol::broadcast:
      return {double(pairs), pairs};
    case Protocol::veto:
    case Protocol::notification: {
      std::uint64_t bits = ub * un * un * (un - 1) / 2;
      return {double(bits), bits};
    }
    case Protocol::collision: {
      std::uint64_t bits = ub * un * un * (un - 1);
      return {double(bits), bits};
    }
    case Protocol::message: {
      if (!m) throw ConfigError("key_budget: message transmission needs m");
      auto params = amd::derive_params(*m, beta);
      std::uint64_t mprime = std::uint64_t(params.encoded_bits());
      std::uint64_t overhead = 2 * ub * un * un * (un - 1);
      double table = double(*m) + 2.0 * (std::log2(double(*m)) + beta) + double(overhead);
      return {table, mprime * pairs + overhead};
    }
  }
  throw ConfigError("key_budget: unknown protocol");
}

/// m / (m + 2*gamma) with gamma from the AMD parameter derivation.
inline double encoding_efficiency(int m, int beta) {
  auto params = amd::derive_params(m, beta);
  return double(m) / double(params.encoded_bits());
}

/// Executions per second: the slowest pairwise key link divided by the
/// per-pair bits one execution consumes.
inline double throughput_estimate(const std::vector<double>& per_link_rates, Protocol proto,
                                  int n, int beta, std::optional<int> m = {}) {
  const std::size_t pairs = std::size_t(n) * std::size_t(n - 1) / 2;
  if (per_link_rates.size() != pairs)
    throw ConfigError("throughput_estimate: need one rate per pair");
  double slowest = per_link_rates.front();
  for (double r : per_link_rates) slowest = std::min(slowest, r);
  double per_pair_bits = double(key_budget(proto, n, beta, m).exact_bits) / double(pairs);
  return slowest / per_pair_bits;
}

struct BudgetReport {
  Protocol protocol = Protocol::broadcast;
  int n = 0;
  int beta = 0;
  std::optional<int> m;
  std::uint64_t formula_bits = 0;   // exact closed form
  std::uint64_t measured_bits = 0;  // engine ledger
  bool match = false;

  static BudgetReport make(Protocol proto, int n, int beta, std::optional<int> m,
                           std::uint64_t measured) {
    BudgetReport r;
    r.protocol = proto;
    r.n = n;
    r.beta = beta;
    r.m = m;
    r.formula_bits = key_budget(proto, n, beta, m).exact_bits;
    r.measured_bits = measured;
    r.match = r.formula_bits == measured;
    return r;
  }
};

}  // namespace anonet::analysis
