// Per-party protocol state machines.
//
// One Party instance per participant; instances communicate only through
// a Transport and stay in lockstep: every participant executes the same
// sequence of parity sub-rounds, so key cursors and round numbers agree
// network-wide without any handshake.
//
// Protocols, built on the anonymous parity round:
//   - parity_round:   one anonymous broadcast (optionally with a silent,
//                     excluded party that decodes the parity in secret)
//   - run_veto:       anonymous OR, n orderings x beta repetitions
//   - run_notification: per-recipient private flags
//   - run_collision_detection: {no sender, single sender, multiple}
//   - run_message_transmission: full anonymous private message pipeline
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "anonet/amd.hpp"
#include "anonet/common.hpp"
#include "anonet/gf2.hpp"
#include "anonet/keyfabric.hpp"
#include "anonet/transport.hpp"

namespace anonet {

struct SessionConfig {
  std::uint64_t session_id = 0;
  int n = 0;
  int beta = 1;
  int repetition = 1;           // odd; parity rounds run N times and majority-vote
  std::uint64_t rng_seed = 0;   // per-party bit streams are derived from this
  std::optional<gf2::BinPoly> amd_modulus;  // session-wide b(x); canonical if unset
};

struct TranscriptEntry {
  std::uint64_t round = 0;
  PartyId party;
  Bit bit = 0;
  auto operator<=>(const TranscriptEntry&) const = default;
};

struct Transcript {
  std::vector<TranscriptEntry> entries;
  std::string outcome;  // per-protocol trailer; private outcomes may differ per party

  /// Line-oriented export: `round_id party bit` lines plus the outcome trailer.
  std::string to_log() const {
    std::ostringstream out;
    for (const auto& e : entries)
      out << e.round << ' ' << e.party.v << ' ' << int(e.bit) << '\n';
    out << "outcome " << outcome << '\n';
    return out.str();
  }
};

/// Honest parties must observe identical announcements.
inline bool announcements_agree(const Transcript& a, const Transcript& b) {
  return a.entries == b.entries;
}

enum class CollisionVerdict : int {
  no_sender = 0,        // stage A output 0
  single_sender = 1,    // A = 1, B = 0
  multiple_senders = 2  // A = 1, B = 1
};

struct MessageRole {
  enum class Kind { sender, receiver, bystander };
  Kind kind = Kind::bystander;
  BitVec message;        // sender only
  PartyId receiver{-1};  // sender only: the party to notify

  static MessageRole sender_of(BitVec msg, PartyId to) {
    return MessageRole{Kind::sender, std::move(msg), to};
  }
  static MessageRole receiving() { return MessageRole{Kind::receiver, {}, {}}; }
  static MessageRole bystanding() { return MessageRole{Kind::bystander, {}, {}}; }
};

struct MessageOutcome {
  enum class Kind { delivered, corrupted, no_sender, collision };
  Kind kind = Kind::no_sender;
  std::optional<BitVec> message;  // receiver only, on delivery
  bool notified = false;          // receiver's private notification flag

  static const char* name(Kind k) {
    switch (k) {
      case Kind::delivered: return "delivered";
      case Kind::corrupted: return "corrupted";
      case Kind::no_sender: return "no_sender";
      case Kind::collision: return "collision";
    }
    return "?";
  }
};

struct ParityOutcome {
  Bit my_announcement = 0;  // first repetition's announcement; 0 when excluded
  Bit overall = 0;          // majority-voted parity (private one when excluded == me)
};

class Party {
 public:
  Party(const SessionConfig& cfg, PartyId me, KeyFabric& fabric, Transport& transport,
        std::unique_ptr<BitSource> rng = nullptr)
      : cfg_(cfg), me_(me), fabric_(fabric), transport_(transport), rng_(std::move(rng)) {
    if (cfg_.n < 3) throw ConfigError("session needs n >= 3");
    if (me_.v < 0 || me_.v >= cfg_.n) throw ConfigError("party id out of range");
    check_repetition(cfg_.repetition);
    if (!rng_) {
      Splitmix64 mix(cfg_.rng_seed);
      std::uint64_t derived = mix.next() ^ (0x9e3779b97f4a7c15ull * std::uint64_t(me_.v + 1));
      rng_ = std::make_unique<SplitmixBits>(derived);
    }
  }

  PartyId id() const { return me_; }
  const Transcript& transcript() const { return transcript_; }
  std::uint64_t rounds_executed() const { return round_seq_; }
  int repetition() const { return cfg_.repetition; }

  /// Repetition-code hardening: run every parity round N times with identical
  /// inputs and majority-vote, multiplying key consumption by N.
  void set_repetition(int n_reps) {
    check_repetition(n_reps);
    cfg_.repetition = n_reps;
  }

  /// One anonymous broadcast round. Every party draws one fresh key bit
  /// per peer and announces the XOR of those bits and its input; the
  /// overall parity equals the XOR of all inputs. An excluded party
  /// draws keys and listens, then recovers the parity in secret by
  /// folding its own pad into the announcements.
  ParityOutcome parity_round(Bit input, std::optional<PartyId> excluded = {}) {
    Schedule sched = default_schedule(excluded);
    return parity_round_scheduled(input, excluded, sched);
  }

  /// One-round anonymous broadcast with an outcome trailer.
  Bit run_broadcast(Bit input) {
    Bit parity = parity_round(input).overall;
    transcript_.outcome = "parity=" + std::to_string(int(parity));
    return parity;
  }

  /// Anonymous OR of all inputs. Vetoers feed fresh random bits into each
  /// parity round; n rotated orderings give every party a round where it
  /// speaks last. Returns 1 on any round with parity 1 or any refusal to
  /// broadcast, terminating early in that case.
  Bit run_veto(Bit x) {
    Bit out = veto_rounds(x, /*early_termination=*/true, nullptr);
    transcript_.outcome = "veto=" + std::to_string(int(out));
    return out;
  }

  /// Anonymous notification. `targets` is this party's row: targets[i] = 1
  /// to notify party i. Recipients are processed in ascending id order,
  /// beta excluded parity rounds each; a recipient is notified if any of
  /// its private parities is 1. The flag is local output, never announced.
  bool run_notification(const std::vector<Bit>& targets) {
    if (int(targets.size()) != cfg_.n)
      throw ConfigError("run_notification: need one target bit per party");
    bool flag = false;
    for (int recipient = 0; recipient < cfg_.n; ++recipient) {
      for (int rep = 0; rep < cfg_.beta; ++rep) {
        if (recipient == me_.v) {
          // the round must run even once the flag is set: every party
          // executes the identical round sequence
          Bit parity = parity_round(0, PartyId{recipient}).overall;
          flag = flag || parity != 0;
        } else {
          Bit c = targets[std::size_t(recipient)] ? rng_->next_bit() : 0;
          parity_round(c, PartyId{recipient});
        }
      }
    }
    transcript_.outcome = "notified=" + std::to_string(int(flag));
    return flag;
  }

  /// Collision detection. Stage A: full-length veto on want_to_send (never
  /// terminated early — senders watch every round's parity, net of their
  /// own contribution, to spot co-senders). Stage B: veto where a sender
  /// inputs 1 iff it detected another sender.
  CollisionVerdict run_collision_detection(Bit want_to_send) {
    Bit detected_other = 0;
    Bit a_out = veto_rounds(want_to_send, /*early_termination=*/false,
                            [&](Bit parity, Bit my_c) {
                              if ((parity ^ my_c) & 1) detected_other = 1;
                            });
    Bit b = Bit(want_to_send && detected_other);
    Bit b_out = veto_rounds(b, /*early_termination=*/true, nullptr);
    CollisionVerdict v = a_out == 0 ? CollisionVerdict::no_sender
                         : b_out == 0 ? CollisionVerdict::single_sender
                                      : CollisionVerdict::multiple_senders;
    transcript_.outcome = "collision_verdict=" + std::to_string(int(v));
    return v;
  }

  /// The transmission pipeline: collision detection, notification of the receiver,
  /// AMD-encoded message phase (sender feeds the codeword, receiver feeds
  /// a uniform mask, bystanders feed 0), receiver-side decode, and a
  /// final veto in which the receiver reports tampering.
  ///
  /// `message_bits` (m) is public session metadata; every party must pass
  /// the same value.
  MessageOutcome run_message_transmission(const MessageRole& role, int message_bits) {
    using Kind = MessageRole::Kind;
    if (role.kind == Kind::sender && int(role.message.size()) != message_bits)
      throw ConfigError("sender message length must equal message_bits");
    if (role.kind == Kind::sender &&
        (role.receiver.v < 0 || role.receiver.v >= cfg_.n || role.receiver == me_))
      throw ConfigError("sender must name another party as receiver");

    MessageOutcome out;
    CollisionVerdict verdict = run_collision_detection(role.kind == Kind::sender);
    if (verdict == CollisionVerdict::no_sender) {
      out.kind = MessageOutcome::Kind::no_sender;
      transcript_.outcome = std::string("message=") + MessageOutcome::name(out.kind);
      return out;
    }
    if (verdict == CollisionVerdict::multiple_senders) {
      out.kind = MessageOutcome::Kind::collision;
      transcript_.outcome = std::string("message=") + MessageOutcome::name(out.kind);
      return out;
    }

    std::vector<Bit> targets(std::size_t(cfg_.n), 0);
    if (role.kind == Kind::sender) targets[std::size_t(role.receiver.v)] = 1;
    out.notified = run_notification(targets);

    amd::AmdParams params = amd::derive_params(message_bits, cfg_.beta, cfg_.amd_modulus);
    const int mprime = params.encoded_bits();

    BitVec inputs;
    BitVec mask;  // receiver's random string r
    switch (role.kind) {
      case Kind::sender:
        inputs = amd::encode(role.message, params, rng_->next_bits(std::size_t(params.gamma)))
                     .bits();
        break;
      case Kind::receiver:
        mask = rng_->next_bits(std::size_t(mprime));
        inputs = mask;
        break;
      case Kind::bystander:
        inputs.assign(std::size_t(mprime), 0);
        break;
    }

    BitVec announced(static_cast<std::size_t>(mprime));
    for (int i = 0; i < mprime; ++i)
      announced[std::size_t(i)] = parity_round(inputs[std::size_t(i)]).overall;

    Bit report_error = 0;
    std::optional<BitVec> decoded;
    if (role.kind == Kind::receiver) {
      decoded = amd::decode(xor_bits(announced, mask), params);
      report_error = decoded ? 0 : 1;
    }

    Bit veto_out = veto_rounds(report_error, /*early_termination=*/true, nullptr);
    if (role.kind == Kind::receiver && !decoded) {
      out.kind = MessageOutcome::Kind::corrupted;  // receiver knows regardless of veto
    } else if (veto_out) {
      out.kind = MessageOutcome::Kind::corrupted;
    } else {
      out.kind = MessageOutcome::Kind::delivered;
      if (role.kind == Kind::receiver) out.message = std::move(decoded);
    }
    transcript_.outcome = std::string("message=") + MessageOutcome::name(out.kind);
    return out;
  }

  /// Parity round over an explicit announcement schedule (the veto
  /// orderings use rotations; everything else uses ascending id order).
  ParityOutcome parity_round_scheduled(Bit input, std::optional<PartyId> excluded,
                                       const Schedule& sched) {
    const int reps = cfg_.repetition;
    int ones = 0;
    Bit first_announcement = 0;
    for (int rep = 0; rep < reps; ++rep) {
      Bit o = parity_subround(input, excluded, sched, rep == 0 ? &first_announcement : nullptr);
      ones += o;
    }
    return ParityOutcome{first_announcement, Bit(2 * ones > reps)};
  }

 private:
  static void check_repetition(int n_reps) {
    if (n_reps < 1 || n_reps % 2 == 0)
      throw ConfigError("repetition count must be odd and >= 1");
  }

  Schedule default_schedule(std::optional<PartyId> excluded) const {
    Schedule s;
    s.reserve(std::size_t(cfg_.n));
    for (int p = 0; p < cfg_.n; ++p)
      if (!(excluded && excluded->v == p)) s.push_back(PartyId{p});
    return s;
  }

  /// Ordering with `last` as the final announcer: last+1, ..., last+n-1, last.
  Schedule rotated_schedule(int last) const {
    Schedule s;
    s.reserve(std::size_t(cfg_.n));
    for (int k = 1; k <= cfg_.n; ++k) s.push_back(PartyId{(last + k) % cfg_.n});
    return s;
  }

  Bit parity_subround(Bit input, std::optional<PartyId> excluded, const Schedule& sched,
                      Bit* my_announcement) {
    RoundId round{cfg_.session_id, round_seq_++};
    Bit pad = 0;
    for (int peer = 0; peer < cfg_.n; ++peer)
      if (peer != me_.v) pad ^= fabric_.draw_bit(me_, PartyId{peer});

    bool announcing = !(excluded && *excluded == me_);
    std::optional<Bit> bit;
    if (announcing) bit = Bit((pad ^ input) & 1);

    RoundResult res = transport_.exchange(round, bit, sched);
    for (std::size_t k = 0; k < res.schedule.size(); ++k)
      transcript_.entries.push_back({round.seq, res.schedule[k], res.bits[k]});

    if (announcing && my_announcement) *my_announcement = *bit;
    Bit overall = res.parity();
    if (!announcing) overall ^= pad;  // only the excluded party learns the true parity
    return overall;
  }

  /// Shared veto loop. `observe` (if set) sees every round's (parity,
  /// own c input) — collision detection's stage A hook.
  Bit veto_rounds(Bit x, bool early_termination,
                  const std::function<void(Bit parity, Bit my_c)>& observe) {
    Bit out = 0;
    for (int last = 0; last < cfg_.n; ++last) {
      Schedule sched = rotated_schedule(last);
      for (int rep = 0; rep < cfg_.beta; ++rep) {
        Bit c = x ? rng_->next_bit() : 0;
        Bit parity;
        try {
          parity = parity_round_scheduled(c, std::nullopt, sched).overall;
        } catch (const RefusedToBroadcast&) {
          parity = 1;  // a refusal forces the veto outcome to 1
        }
        if (observe) observe(parity, c);
        if (parity) {
          out = 1;
          if (early_termination) return out;
        }
      }
    }
    return out;
  }

  SessionConfig cfg_;
  PartyId me_;
  KeyFabric& fabric_;
  Transport& transport_;
  std::unique_ptr<BitSource> rng_;
  Transcript transcript_;
  std::uint64_t round_seq_ = 0;
};

}  // namespace anonet
