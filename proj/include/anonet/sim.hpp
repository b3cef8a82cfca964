// In-process execution of a full n-party session over the simulator hub.
//
// Spawns one thread per party, runs the supplied per-party function, and
// collects results, transcripts, and the fabric consumption delta. With
// fixed seeds the outputs are identical across runs: rounds are resolved
// purely by submitted bits, never by thread timing.
#pragma once

#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

#include "anonet/engine.hpp"
#include "anonet/keyfabric.hpp"
#include "anonet/transport.hpp"

namespace anonet {

template <class R>
struct SimRun {
  std::vector<R> results;              // indexed by party
  std::vector<Transcript> transcripts; // indexed by party
  std::uint64_t consumed_bits = 0;     // network-wide fabric delta
};

using RngFactory = std::function<std::unique_ptr<BitSource>(PartyId)>;

template <class Fn>
auto run_simulated(const SessionConfig& cfg, KeyFabric& fabric, Fn&& per_party,
                   const AdversaryPolicy& policy = {}, const RngFactory& rng_factory = {})
    -> SimRun<std::invoke_result_t<Fn&, Party&>> {
  using R = std::invoke_result_t<Fn&, Party&>;
  static_assert(!std::is_void_v<R>, "per-party function must return a value");

  const int n = cfg.n;
  SimHub hub(n, policy);
  const std::uint64_t before = fabric.total_consumed();

  std::vector<std::optional<R>> results(static_cast<std::size_t>(n));
  std::vector<Transcript> transcripts(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> threads;
  threads.reserve(std::size_t(n));

  for (int p = 0; p < n; ++p) {
    threads.emplace_back([&, p] {
      try {
        auto rng = rng_factory ? rng_factory(PartyId{p}) : nullptr;
        Party party(cfg, PartyId{p}, fabric, hub.endpoint(PartyId{p}), std::move(rng));
        results[std::size_t(p)] = per_party(party);
        transcripts[std::size_t(p)] = party.transcript();
      } catch (...) {
        errors[std::size_t(p)] = std::current_exception();
        hub.abort("party " + std::to_string(p) + " failed");
      }
    });
  }
  for (auto& t : threads) t.join();

  // Prefer the root cause over secondary SessionAborted errors.
  std::exception_ptr first;
  for (const auto& e : errors) {
    if (!e) continue;
    if (!first) first = e;
    try {
      std::rethrow_exception(e);
    } catch (const SessionAborted&) {
    } catch (...) {
      first = e;
      break;
    }
  }
  if (first) std::rethrow_exception(first);

  SimRun<R> run;
  run.results.reserve(std::size_t(n));
  for (auto& r : results) run.results.push_back(std::move(*r));
  run.transcripts = std::move(transcripts);
  run.consumed_bits = fabric.total_consumed() - before;
  return run;
}

// ---------------------------------------------------------------------------
// Whole-protocol conveniences used by the CLI and tests.

inline SimRun<Bit> sim_broadcast(const SessionConfig& cfg, KeyFabric& fabric,
                                 const std::vector<Bit>& inputs,
                                 const AdversaryPolicy& policy = {}) {
  return run_simulated(
      cfg, fabric,
      [&](Party& p) { return p.run_broadcast(inputs[std::size_t(p.id().v)]); }, policy);
}

inline SimRun<Bit> sim_veto(const SessionConfig& cfg, KeyFabric& fabric,
                            const std::vector<Bit>& inputs,
                            const AdversaryPolicy& policy = {},
                            const RngFactory& rng_factory = {}) {
  return run_simulated(
      cfg, fabric,
      [&](Party& p) { return p.run_veto(inputs[std::size_t(p.id().v)]); }, policy,
      rng_factory);
}

/// `targets[j][i]` = 1 when party j wants to notify party i. Results are
/// the per-party private notification flags.
inline SimRun<Bit> sim_notification(const SessionConfig& cfg, KeyFabric& fabric,
                                    const std::vector<std::vector<Bit>>& targets,
                                    const AdversaryPolicy& policy = {}) {
  return run_simulated(
      cfg, fabric,
      [&](Party& p) { return Bit(p.run_notification(targets[std::size_t(p.id().v)])); },
      policy);
}

inline SimRun<CollisionVerdict> sim_collision(const SessionConfig& cfg, KeyFabric& fabric,
                                              const std::vector<Bit>& wants,
                                              const AdversaryPolicy& policy = {}) {
  return run_simulated(
      cfg, fabric,
      [&](Party& p) { return p.run_collision_detection(wants[std::size_t(p.id().v)]); },
      policy);
}

inline SimRun<MessageOutcome> sim_message(const SessionConfig& cfg, KeyFabric& fabric,
                                          PartyId sender, PartyId receiver,
                                          const BitVec& message,
                                          const AdversaryPolicy& policy = {}) {
  return run_simulated(
      cfg, fabric,
      [&](Party& p) {
        MessageRole role = p.id() == sender   ? MessageRole::sender_of(message, receiver)
                           : p.id() == receiver ? MessageRole::receiving()
                                                : MessageRole::bystanding();
        return p.run_message_transmission(role, int(message.size()));
      },
      policy);
}

}  // namespace anonet
