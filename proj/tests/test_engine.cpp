#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "anonet/analysis.hpp"
#include "anonet/sim.hpp"

using namespace anonet;

namespace {

SessionConfig config(int n, int beta, std::uint64_t seed, int repetition = 1) {
  SessionConfig cfg;
  cfg.session_id = seed;
  cfg.n = n;
  cfg.beta = beta;
  cfg.repetition = repetition;
  cfg.rng_seed = seed;
  return cfg;
}

KeyFabric fabric_for(int n, std::size_t bits, std::uint64_t seed, double r_e = 0.0) {
  return KeyFabric::generate(n, bits, r_e, seed);
}

Bit xor_of(const std::vector<Bit>& v) {
  Bit x = 0;
  for (Bit b : v) x ^= b;
  return x;
}

}  // namespace

TEST_CASE("parity equals XOR of inputs for all vectors, n=3..4") {
  for (int n = 3; n <= 4; ++n) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto fabric = fabric_for(n, 1u << n, seed);
      auto cfg = config(n, 1, seed);
      for (std::uint64_t iv = 0; iv < (1ull << n); ++iv) {
        std::vector<Bit> inputs(std::size_t(n), 0);
        for (int p = 0; p < n; ++p) inputs[std::size_t(p)] = Bit((iv >> p) & 1);
        auto run = sim_broadcast(cfg, fabric, inputs);
        for (Bit r : run.results) CHECK(r == xor_of(inputs));
      }
    }
  }
}

TEST_CASE("one parity round consumes n(n-1)/2 bits") {
  auto fabric = fabric_for(8, 8, 3);
  auto run = sim_broadcast(config(8, 1, 3), fabric, {0, 1, 0, 0, 0, 0, 0, 0});
  CHECK(run.results[0] == 1);
  CHECK(run.consumed_bits == 28);
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j)
      CHECK(fabric.consumed(PartyId{i}, PartyId{j}) == 1);
}

TEST_CASE("two senders collide to parity 0") {
  auto fabric = fabric_for(4, 4, 4);
  auto run = sim_broadcast(config(4, 1, 4), fabric, {1, 0, 1, 0});
  CHECK(run.results[0] == 0);
}

TEST_CASE("excluded party decodes the parity in secret") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto fabric = fabric_for(4, 4, seed);
    auto run = run_simulated(config(4, 1, seed), fabric, [&](Party& p) {
      Bit input = p.id().v == 2 ? 1 : 0;  // party 2 speaks, party 0 listens
      return p.parity_round(p.id().v == 0 ? 0 : input, PartyId{0}).overall;
    });
    CHECK(run.results[0] == 1);  // the listener recovers XOR of the others' inputs
  }
}

TEST_CASE("transcripts agree across honest parties and runs are reproducible") {
  auto cfg = config(5, 2, 77);
  auto f1 = fabric_for(5, 2000, 77);
  auto r1 = sim_veto(cfg, f1, {0, 0, 1, 0, 0});
  for (std::size_t p = 1; p < r1.transcripts.size(); ++p)
    CHECK(announcements_agree(r1.transcripts[0], r1.transcripts[p]));

  auto f2 = fabric_for(5, 2000, 77);
  auto r2 = sim_veto(cfg, f2, {0, 0, 1, 0, 0});
  CHECK(r1.results == r2.results);
  CHECK(r1.transcripts[0].to_log() == r2.transcripts[0].to_log());
  CHECK(r1.consumed_bits == r2.consumed_bits);
}

// -- veto --------------------------------------------------------------------

TEST_CASE("all-zero veto outputs 0 and consumes the exact budget") {
  for (int n : {3, 5}) {
    for (int beta : {2, 4}) {
      auto fabric = fabric_for(n, std::size_t(n * beta + 4), 9);
      auto run = sim_veto(config(n, beta, 9), fabric, std::vector<Bit>(std::size_t(n), 0));
      for (Bit r : run.results) CHECK(r == 0);
      CHECK(run.consumed_bits ==
            std::uint64_t(beta) * std::uint64_t(n) * std::uint64_t(n) * std::uint64_t(n - 1) / 2);
    }
  }
}

TEST_CASE("a single vetoer wins") {
  int vetoes = 0;
  const int trials = 50;
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    auto fabric = fabric_for(4, 200, seed + 1000);
    std::vector<Bit> inputs{0, 0, 0, 0};
    inputs[std::size_t(seed % 4)] = 1;
    auto run = sim_veto(config(4, 4, seed), fabric, inputs);
    vetoes += run.results[0];
  }
  // failure probability is 2^-16 per trial
  CHECK(vetoes == trials);
}

TEST_CASE("exhaustive veto failure fraction is exactly 2^-(n beta)") {
  // n=3, beta=2, one vetoer: enumerate all 2^6 randomness strings for the
  // vetoer's c choices. The output is 0 only for the all-zero string.
  const int n = 3, beta = 2;
  int failures = 0;
  for (std::uint64_t pattern = 0; pattern < 64; ++pattern) {
    auto fabric = fabric_for(n, 16, 5);
    BitVec script(6);
    for (int i = 0; i < 6; ++i) script[std::size_t(i)] = Bit((pattern >> i) & 1);
    RngFactory rngs = [&](PartyId p) -> std::unique_ptr<BitSource> {
      if (p.v == 1) return std::make_unique<ScriptedBits>(script);
      return std::make_unique<SplitmixBits>(std::uint64_t(p.v));
    };
    auto run = sim_veto(config(n, beta, 5), fabric, {0, 1, 0}, {}, rngs);
    if (run.results[0] == 0) ++failures;
  }
  CHECK(failures == 1);  // 64 * 2^-6
}

TEST_CASE("silent party forces veto to 1") {
  auto fabric = fabric_for(4, 64, 6);
  auto run = sim_veto(config(4, 2, 6), fabric, {0, 0, 0, 0},
                      AdversaryPolicy::silent(PartyId{2}));
  for (Bit r : run.results) CHECK(r == 1);
}

TEST_CASE("rushing adversary cannot suppress an honest veto") {
  // n=4, beta=8: party 3 rushes targeting parity 0; party 0 vetoes.
  const int trials = 2000;
  auto fabric = fabric_for(4, std::size_t(trials) * 40, 7);
  auto cfg = config(4, 8, 7);
  auto run = run_simulated(
      cfg, fabric,
      [&](Party& p) {
        int forced = 0;
        for (int t = 0; t < trials; ++t)
          if (p.run_veto(p.id().v == 0 ? 1 : 0) == 0) ++forced;
        return forced;
      },
      AdversaryPolicy::rushing(PartyId{3}));
  double bound = std::pow(2.0, -8);
  double sigma = std::sqrt(bound * (1 - bound) / trials);
  CHECK(double(run.results[0]) / trials <= bound + 3 * sigma);
}

// -- notification -------------------------------------------------------------

TEST_CASE("notification with no targets raises no flags, exact budget") {
  const int n = 4, beta = 3;
  auto fabric = fabric_for(n, 64, 8);
  std::vector<std::vector<Bit>> targets(std::size_t(n), std::vector<Bit>(std::size_t(n), 0));
  auto run = sim_notification(config(n, beta, 8), fabric, targets);
  for (Bit f : run.results) CHECK(f == 0);
  CHECK(run.consumed_bits ==
        std::uint64_t(beta) * std::uint64_t(n) * std::uint64_t(n) * std::uint64_t(n - 1) / 2);
}

TEST_CASE("a notified party raises its flag, others do not") {
  const int n = 4, beta = 8;
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto fabric = fabric_for(n, 256, seed + 50);
    std::vector<std::vector<Bit>> targets(std::size_t(n), std::vector<Bit>(std::size_t(n), 0));
    targets[1][3] = 1;  // party 1 notifies party 3
    auto run = sim_notification(config(n, beta, seed), fabric, targets);
    CHECK(run.results[0] == 0);
    CHECK(run.results[1] == 0);
    CHECK(run.results[2] == 0);
    successes += run.results[3];
  }
  CHECK(successes == 20);  // failure 2^-8 per trial
}

TEST_CASE("exhaustive notification failure fraction is exactly 2^-beta") {
  // n=3, beta=3, party 0 notifies party 2: party 0 draws exactly beta
  // random bits; the flag stays 0 only when all of them are 0.
  const int n = 3, beta = 3;
  int failures = 0;
  for (std::uint64_t pattern = 0; pattern < 8; ++pattern) {
    auto fabric = fabric_for(n, 32, 13);
    BitVec script(3);
    for (int i = 0; i < 3; ++i) script[std::size_t(i)] = Bit((pattern >> i) & 1);
    RngFactory rngs = [&](PartyId p) -> std::unique_ptr<BitSource> {
      if (p.v == 0) return std::make_unique<ScriptedBits>(script);
      return std::make_unique<SplitmixBits>(std::uint64_t(p.v));
    };
    std::vector<std::vector<Bit>> targets(3, std::vector<Bit>(3, 0));
    targets[0][2] = 1;
    auto run = run_simulated(
        config(n, beta, 13), fabric,
        [&](Party& p) { return Bit(p.run_notification(targets[std::size_t(p.id().v)])); }, {},
        rngs);
    if (run.results[2] == 0) ++failures;
  }
  CHECK(failures == 1);  // 8 * 2^-3
}

// -- collision detection -------------------------------------------------------

TEST_CASE("collision verdicts for 0, 1, and 2 senders") {
  const int n = 4, beta = 8;
  auto fabric = fabric_for(n, 4096, 21);
  auto cfg = config(n, beta, 21);

  auto none = sim_collision(cfg, fabric, {0, 0, 0, 0});
  for (auto v : none.results) CHECK(v == CollisionVerdict::no_sender);
  CHECK(none.consumed_bits ==
        std::uint64_t(beta) * std::uint64_t(n) * std::uint64_t(n) * std::uint64_t(n - 1));

  auto one = sim_collision(cfg, fabric, {0, 0, 1, 0});
  for (auto v : one.results) CHECK(v == CollisionVerdict::single_sender);

  auto two = sim_collision(cfg, fabric, {1, 0, 1, 0});
  for (auto v : two.results) CHECK(v == CollisionVerdict::multiple_senders);
}

TEST_CASE("two senders are flagged as a collision almost always") {
  const int n = 4, beta = 8, trials = 1000;
  auto fabric = fabric_for(n, std::size_t(trials) * 70, 22);
  auto run = run_simulated(config(n, beta, 22), fabric, [&](Party& p) {
    int flagged = 0;
    for (int t = 0; t < trials; ++t) {
      Bit want = (p.id().v == 0 || p.id().v == 2) ? 1 : 0;
      if (p.run_collision_detection(want) == CollisionVerdict::multiple_senders) ++flagged;
    }
    return flagged;
  });
  CHECK(run.results[0] >= 990);  // collisions flagged in >= 99% of trials
}

// -- message transmission -------------------------------------------------------

TEST_CASE("honest message transmission delivers the message") {
  const int n = 3, beta = 4;
  BitVec message = bits_from_string("1011001110001111");
  auto fabric = fabric_for(n, 2048, 30);
  auto run = sim_message(config(n, beta, 30), fabric, PartyId{1}, PartyId{2}, message);
  for (const auto& r : run.results) CHECK(r.kind == MessageOutcome::Kind::delivered);
  REQUIRE(run.results[2].message.has_value());
  CHECK(*run.results[2].message == message);
  CHECK(run.results[2].notified);
  CHECK_FALSE(run.results[0].message.has_value());
}

TEST_CASE("all-zero message round trips") {
  auto fabric = fabric_for(3, 1024, 31);
  BitVec message(8, 0);
  auto run = sim_message(config(3, 2, 31), fabric, PartyId{0}, PartyId{1}, message);
  REQUIRE(run.results[1].message.has_value());
  CHECK(*run.results[1].message == message);
}

TEST_CASE("no sender and collisions abort the pipeline") {
  const int n = 4, beta = 4;
  auto fabric = fabric_for(n, 2048, 32);
  auto cfg = config(n, beta, 32);

  auto nobody = run_simulated(cfg, fabric, [&](Party& p) {
    return p.run_message_transmission(MessageRole::bystanding(), 16);
  });
  for (const auto& r : nobody.results) CHECK(r.kind == MessageOutcome::Kind::no_sender);

  BitVec message(16, 1);
  auto clash = run_simulated(cfg, fabric, [&](Party& p) {
    MessageRole role = (p.id().v <= 1) ? MessageRole::sender_of(message, PartyId{3})
                                       : MessageRole::bystanding();
    return p.run_message_transmission(role, 16);
  });
  for (const auto& r : clash.results) CHECK(r.kind == MessageOutcome::Kind::collision);
}

TEST_CASE("a bystander flipping a message-phase announcement is caught") {
  const int n = 4, beta = 8;
  BitVec message = bits_from_string("0110101001011100");
  auto params = amd::derive_params(int(message.size()), beta);
  // rounds: collision detection 2*n*beta, notification n*beta, then m' rounds
  std::uint64_t first_msg_round = std::uint64_t(3 * n * beta);
  std::uint64_t target = first_msg_round + 5;
  auto policy = AdversaryPolicy::bit_flip(PartyId{3}, [=](std::uint64_t seq) {
    return seq == target;
  });
  auto fabric = fabric_for(n, 4096, 33);
  auto run = sim_message(config(n, beta, 33), fabric, PartyId{0}, PartyId{1}, message, policy);
  (void)params;
  for (const auto& r : run.results) CHECK(r.kind == MessageOutcome::Kind::corrupted);
}

// -- repetition hardening -------------------------------------------------------

TEST_CASE("repetition must be odd") {
  auto fabric = fabric_for(3, 16, 40);
  CHECK_THROWS_AS(run_simulated(config(3, 1, 40, 2), fabric,
                                [](Party& p) { return p.parity_round(0).overall; }),
                  ConfigError);
  auto run = run_simulated(config(3, 1, 40, 1), fabric, [&](Party& p) {
    CHECK_THROWS_AS(p.set_repetition(4), ConfigError);
    p.set_repetition(3);
    return p.parity_round(0).overall;
  });
  CHECK(run.results[0] == 0);
}

TEST_CASE("repetition N multiplies consumption and preserves outcomes") {
  auto f1 = fabric_for(4, 64, 41);
  auto r1 = sim_broadcast(config(4, 1, 41, 1), f1, {0, 1, 0, 0});
  auto f3 = fabric_for(4, 64, 41);
  auto r3 = sim_broadcast(config(4, 1, 41, 3), f3, {0, 1, 0, 0});
  CHECK(r1.results == r3.results);
  CHECK(r3.consumed_bits == 3 * r1.consumed_bits);
}

TEST_CASE("majority vote suppresses key-error parity flips") {
  // r_e chosen so E_parity is large enough to observe: n=4 -> 6 links.
  const int n = 4;
  const double r_e = 0.02;
  const int rounds = 4000;
  double expected1 = analysis::parity_error_rate(r_e, n);
  double expected3 = analysis::repetition_residual(expected1, 3);

  auto count_errors = [&](int reps, std::uint64_t seed) {
    auto fabric = KeyFabric::generate(n, std::size_t(rounds) * std::size_t(reps), r_e, seed);
    auto run = run_simulated(config(n, 1, seed, reps), fabric, [&](Party& p) {
      int errs = 0;
      for (int t = 0; t < rounds; ++t)
        if (p.parity_round(0).overall != 0) ++errs;
      return errs;
    });
    return run.results[0];
  };

  double rate1 = double(count_errors(1, 50)) / rounds;
  double rate3 = double(count_errors(3, 51)) / rounds;
  double sigma1 = std::sqrt(expected1 * (1 - expected1) / rounds);
  double sigma3 = std::sqrt(expected3 * (1 - expected3) / rounds);
  CHECK(std::abs(rate1 - expected1) <= 3 * sigma1 + 1e-9);
  CHECK(std::abs(rate3 - expected3) <= 3 * sigma3 + 1e-9);
}

TEST_CASE("length-5 repetition matches the residual formula at inflated error rate") {
  // the production regime (r_e=1e-4, residual ~2e-7) is out of Monte Carlo
  // reach; the formula is validated where the event is observable
  const int n = 8, reps = 5, trials = 4000;
  const double r_e = 1e-2;
  auto fabric = KeyFabric::generate(n, std::size_t(trials) * reps, r_e, 321);
  auto run = run_simulated(config(n, 1, 321, reps), fabric, [&](Party& p) {
    int errs = 0;
    for (int t = 0; t < trials; ++t)
      if (p.parity_round(0).overall != 0) ++errs;
    return errs;
  });
  double expected = analysis::repetition_residual(analysis::parity_error_rate(r_e, n), reps);
  double observed = double(run.results[0]) / trials;
  double sigma = std::sqrt(expected * (1 - expected) / trials);
  CHECK(std::abs(observed - expected) <= 3 * sigma);
}

TEST_CASE("repetition at r_e=0.5 stays at one half") {
  // majority of coin flips is still a coin flip: the residual formula's fixed point
  const int rounds = 3000;
  auto fabric = KeyFabric::generate(3, std::size_t(rounds) * 3, 0.5, 52);
  auto run = run_simulated(config(3, 1, 52, 3), fabric, [&](Party& p) {
    int errs = 0;
    for (int t = 0; t < rounds; ++t)
      if (p.parity_round(0).overall != 0) ++errs;
    return errs;
  });
  double rate = double(run.results[0]) / rounds;
  CHECK(rate == doctest::Approx(0.5).epsilon(0.06));
}

TEST_CASE("message-phase parities look uniform to bystanders") {
  // the receiver's mask r blinds the codeword: the broadcast outcome d is
  // uniform regardless of the message content; frequency chi-squared over
  // ~1e4 message-phase rounds
  const int n = 4, beta = 16;
  BitVec message(8192, 1);  // worst case: all ones, no randomness of its own
  auto params = amd::derive_params(int(message.size()), beta);
  const int mprime = params.encoded_bits();
  auto fabric = fabric_for(n, std::size_t(mprime) + std::size_t(8 * n * beta), 70);
  auto run = sim_message(config(n, beta, 70), fabric, PartyId{0}, PartyId{1}, message);
  REQUIRE(run.results[1].message.has_value());

  // message-phase rounds come after collision detection (2 n beta) and
  // notification (n beta); d per round = XOR of that round's announcements
  const std::uint64_t first = std::uint64_t(3 * n * beta);
  std::map<std::uint64_t, Bit> d;
  for (const auto& e : run.transcripts[2].entries)  // a bystander's view
    if (e.round >= first && e.round < first + std::uint64_t(mprime))
      d[e.round] ^= e.bit;
  REQUIRE(d.size() == std::size_t(mprime));
  double ones = 0;
  for (const auto& [round, bit] : d) ones += bit;
  double expected = mprime / 2.0;
  double chi2 = (ones - expected) * (ones - expected) / expected +
                (mprime - ones - expected) * (mprime - ones - expected) / expected;
  CHECK(chi2 < 10.83);  // chi-squared(1) at p = 0.001
}

// -- failure handling -----------------------------------------------------------

TEST_CASE("depleted keys abort the session") {
  auto fabric = fabric_for(3, 2, 60);
  auto cfg = config(3, 1, 60);
  CHECK_THROWS_AS(run_simulated(cfg, fabric,
                                [&](Party& p) {
                                  Bit acc = 0;
                                  for (int i = 0; i < 5; ++i) acc ^= p.parity_round(0).overall;
                                  return acc;
                                }),
                  KeysDepleted);
}

// -- anonymity -------------------------------------------------------------------

TEST_CASE("single-coalition view is sender-independent at n=3") {
  // For each 1-party coalition, the joint distribution of (announcements,
  // coalition keys) over all 2^3 key assignments is identical whichever
  // honest party sent the 1.
  const int n = 3;
  for (int observer = 0; observer < n; ++observer) {
    std::vector<std::map<std::string, int>> dists;
    for (int sender = 0; sender < n; ++sender) {
      if (sender == observer) continue;
      std::map<std::string, int> dist;
      for (std::uint64_t keys = 0; keys < 8; ++keys) {
        std::vector<BitVec> pair_bits;
        for (int k = 0; k < 3; ++k) pair_bits.push_back({Bit((keys >> k) & 1)});
        auto fabric = KeyFabric::from_shared_bits(n, pair_bits);
        std::vector<Bit> inputs(n, 0);
        inputs[std::size_t(sender)] = 1;
        auto run = sim_broadcast(config(n, 1, 1), fabric, inputs);
        auto pair_idx = [&](int i, int j) {
          if (i > j) std::swap(i, j);
          return std::size_t(i) * std::size_t(2 * n - i - 1) / 2 + std::size_t(j - i - 1);
        };
        std::string view;
        for (const auto& e : run.transcripts[0].entries) view += char('0' + e.bit);
        view += '|';
        for (int peer = 0; peer < n; ++peer)
          if (peer != observer) view += char('0' + pair_bits[pair_idx(observer, peer)][0]);
        dist[view]++;
      }
      dists.push_back(std::move(dist));
    }
    REQUIRE(dists.size() == 2);
    CHECK(dists[0] == dists[1]);
  }
}
