// Round-synchronized broadcast transport.
//
// Every protocol round, each announcing party contributes one bit and
// every party (announcers and listeners alike) receives the identical
// full announcement vector. The in-process simulator implements this as
// a rendezvous hub with adversary hooks; the wire implementation lives
// in tcp_transport.hpp.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "anonet/common.hpp"

namespace anonet {

struct RoundId {
  std::uint64_t session = 0;
  std::uint64_t seq = 0;
  auto operator<=>(const RoundId&) const = default;
};

/// Announcement order for a round; the excluded party, if any, is simply
/// not in the schedule. Order matters: a party's turn determines which
/// earlier announcements a rushing adversary could have seen.
using Schedule = std::vector<PartyId>;

struct RoundResult {
  Schedule schedule;
  std::vector<Bit> bits;  // bits[k] announced by schedule[k]

  Bit parity() const {
    Bit p = 0;
    for (Bit b : bits) p ^= b;
    return p;
  }
};

struct AdversaryPolicy {
  enum class Mode { honest, rushing, silent, bit_flip };

  Mode mode = Mode::honest;
  PartyId party{-1};
  /// bit_flip: rounds on which the named party's announcement is flipped.
  std::function<bool(std::uint64_t seq)> round_pred;
  /// rushing: chooses the announcement from the prefix visible at the
  /// party's slot. Default targets parity 0: announce XOR of seen bits.
  std::function<Bit(const std::vector<Bit>& seen)> rush_fn;

  static AdversaryPolicy honest_policy() { return {}; }
  static AdversaryPolicy rushing(PartyId p) {
    AdversaryPolicy a;
    a.mode = Mode::rushing;
    a.party = p;
    return a;
  }
  static AdversaryPolicy silent(PartyId p) {
    AdversaryPolicy a;
    a.mode = Mode::silent;
    a.party = p;
    return a;
  }
  static AdversaryPolicy bit_flip(PartyId p, std::function<bool(std::uint64_t)> pred) {
    AdversaryPolicy a;
    a.mode = Mode::bit_flip;
    a.party = p;
    a.round_pred = std::move(pred);
    return a;
  }
};

class Transport {
 public:
  virtual ~Transport() = default;

  /// Announce `my_bit` for `round` (std::nullopt: listen only) and block
  /// until the round completes. Returns identical results at every honest
  /// party. Throws RefusedToBroadcast / CommitmentMismatch / SessionAborted.
  virtual RoundResult exchange(RoundId round, std::optional<Bit> my_bit,
                               const Schedule& schedule) = 0;
};

/// Deterministic in-process hub for n parties. Each party holds one
/// endpoint; rounds complete when every scheduled announcer has spoken
/// (or the adversary hook resolved), so results depend only on inputs
/// and policy, never on thread timing.
class SimHub {
 public:
  explicit SimHub(int n, AdversaryPolicy policy = {})
      : n_(n), policy_(std::move(policy)) {
    endpoints_.reserve(std::size_t(n));
    for (int p = 0; p < n; ++p)
      endpoints_.push_back(std::unique_ptr<Endpoint>(new Endpoint(this, PartyId{p})));
  }

  Transport& endpoint(PartyId p) { return *endpoints_.at(std::size_t(p.v)); }

  /// Release every waiter with a SessionAborted; used when one party
  /// fails so the rest do not block forever.
  void abort(const std::string& reason) {
    std::lock_guard<std::mutex> lock(mu_);
    abort_reason_ = reason.empty() ? "session aborted" : reason;
    cv_.notify_all();
  }

 private:
  struct Pending {
    Schedule schedule;
    std::map<int, Bit> bits;       // announcer -> submitted bit
    std::set<int> arrived;         // parties that have called exchange
    bool complete = false;
    bool refused = false;          // silent announcer in schedule
    PartyId refused_party{-1};
    std::vector<Bit> result;       // in schedule order, valid when complete
    int fetched = 0;
  };

  class Endpoint final : public Transport {
   public:
    Endpoint(SimHub* hub, PartyId me) : hub_(hub), me_(me) {}
    RoundResult exchange(RoundId round, std::optional<Bit> my_bit,
                         const Schedule& schedule) override {
      return hub_->do_exchange(me_, round, my_bit, schedule);
    }

   private:
    SimHub* hub_;
    PartyId me_;
  };

  static bool in_schedule(const Schedule& s, PartyId p) {
    for (PartyId q : s)
      if (q == p) return true;
    return false;
  }

  RoundResult do_exchange(PartyId me, RoundId round, std::optional<Bit> my_bit,
                          const Schedule& schedule) {
    std::unique_lock<std::mutex> lock(mu_);
    if (abort_reason_) throw SessionAborted(*abort_reason_);

    Pending& p = rounds_[round.seq];
    if (p.schedule.empty())
      p.schedule = schedule;
    else if (p.schedule != schedule)
      throw std::logic_error("sim transport: schedule disagreement in round " +
                             std::to_string(round.seq));
    if (!p.arrived.insert(me.v).second)
      throw std::logic_error("sim transport: duplicate call for round " +
                             std::to_string(round.seq));

    bool i_announce = my_bit.has_value();
    if (i_announce != in_schedule(schedule, me))
      throw std::logic_error("sim transport: announcement does not match schedule");
    if (i_announce) {
      bool suppressed = policy_.mode == AdversaryPolicy::Mode::silent && policy_.party == me;
      bool deferred = policy_.mode == AdversaryPolicy::Mode::rushing && policy_.party == me;
      if (!suppressed && !deferred) p.bits[me.v] = *my_bit & 1;
    }

    try_complete(round.seq, p);
    cv_.wait(lock, [&] { return p.complete || abort_reason_; });
    if (abort_reason_) throw SessionAborted(*abort_reason_);

    bool refused = p.refused;
    PartyId refused_party = p.refused_party;
    RoundResult res{p.schedule, p.result};
    if (++p.fetched == n_) rounds_.erase(round.seq);
    if (refused) throw RefusedToBroadcast(refused_party);
    return res;
  }

  void try_complete(std::uint64_t seq, Pending& p) {
    if (p.complete) return;
    PartyId silent{-1}, rushing{-1};
    if (policy_.mode == AdversaryPolicy::Mode::silent) silent = policy_.party;
    if (policy_.mode == AdversaryPolicy::Mode::rushing) rushing = policy_.party;

    for (PartyId q : p.schedule) {
      if (q == silent || q == rushing) {
        // silent never speaks; rushing speaks once its prefix is known,
        // which the hub resolves below. Both must at least have arrived.
        if (!p.arrived.count(q.v)) return;
        continue;
      }
      if (!p.bits.count(q.v)) return;
    }

    if (in_schedule(p.schedule, silent)) {
      p.refused = true;
      p.refused_party = silent;
      p.complete = true;
      cv_.notify_all();
      return;
    }

    if (in_schedule(p.schedule, rushing)) {
      std::vector<Bit> seen;
      for (PartyId q : p.schedule) {
        if (q == rushing) break;
        seen.push_back(p.bits.at(q.v));
      }
      Bit b;
      if (policy_.rush_fn) {
        b = policy_.rush_fn(seen) & 1;
      } else {
        b = 0;
        for (Bit s : seen) b ^= s;
      }
      p.bits[rushing.v] = b;
    }

    p.result.reserve(p.schedule.size());
    for (PartyId q : p.schedule) {
      Bit b = p.bits.at(q.v);
      if (policy_.mode == AdversaryPolicy::Mode::bit_flip && policy_.party == q &&
          policy_.round_pred && policy_.round_pred(seq))
        b ^= 1;
      p.result.push_back(b);
    }
    p.complete = true;
    cv_.notify_all();
  }

  int n_;
  AdversaryPolicy policy_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, Pending> rounds_;
  std::optional<std::string> abort_reason_;
};

}  // namespace anonet
