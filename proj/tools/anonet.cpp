// anonet: operator entry point.
//
//   anonet keygen   generate a pairwise key fabric file
//   anonet run      execute a protocol session (simulator or TCP mesh)
//   anonet analyze  emit the closed-form tables as CSV
//
// Exit codes: 0 success (protocol outcome printed), 2 protocol abort,
// 3 configuration error, 4 transport failure.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "anonet/analysis.hpp"
#include "anonet/sim.hpp"
#include "anonet/tcp_transport.hpp"

using namespace anonet;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitProtocolAbort = 2;
constexpr int kExitConfig = 3;
constexpr int kExitTransport = 4;

struct KeygenArgs {
  int n = 0;
  std::uint64_t bits = 0;
  double re = 0.0;
  std::uint64_t seed = 0;
  std::string out = "fabric.bin";
};

struct RunArgs {
  std::string protocol;
  std::string transport = "sim";
  std::string fabric_path;
  std::uint64_t ephemeral_bits = 0;  // generate in memory instead of loading
  int n = 0;                         // cross-check / used with --ephemeral-bits
  int beta = 16;
  int rep = 1;
  std::uint64_t seed = 0;
  std::uint64_t session = 1;
  std::string input;     // per-party bits (sim) or one bit (tcp)
  std::string notify;    // "J:I[,J:I]..."
  int sender = -1;
  int receiver = -1;
  std::string message_hex;
  int message_bits = 0;
  std::string message_file;
  std::uint64_t random_message = 0;  // bits of random message (seeded)
  std::string adversary = "none";
  std::string out_dir;
  std::string amd_modulus;
  // tcp only
  int party = -1;
  std::string listen = "127.0.0.1:0";
  std::string peers;  // "host:port,host:port,..."
  int round_timeout_ms = 5000;
};

struct AnalyzeArgs {
  std::string out_dir = "analysis";
  int n = 8;
  int beta = 16;
  int message_bits = 1024;
  std::uint64_t seed = 1;
};

std::vector<Bit> parse_bit_string(const std::string& s, int expect) {
  auto bits = bits_from_string(s);
  if (expect > 0 && int(bits.size()) != expect)
    throw ConfigError("expected " + std::to_string(expect) + " input bits, got " +
                      std::to_string(bits.size()));
  return bits;
}

AdversaryPolicy parse_adversary(const std::string& text) {
  if (text.empty() || text == "none") return {};
  auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("bad --adversary: " + text);
  std::string kind = text.substr(0, colon);
  std::string rest = text.substr(colon + 1);
  if (kind == "rushing") return AdversaryPolicy::rushing(PartyId{std::stoi(rest)});
  if (kind == "silent") return AdversaryPolicy::silent(PartyId{std::stoi(rest)});
  if (kind == "bitflip") {
    auto at = rest.find('@');
    if (at == std::string::npos) throw ConfigError("bitflip needs party@round");
    int party = std::stoi(rest.substr(0, at));
    std::uint64_t round = std::stoull(rest.substr(at + 1));
    return AdversaryPolicy::bit_flip(PartyId{party},
                                     [round](std::uint64_t seq) { return seq == round; });
  }
  throw ConfigError("unknown adversary kind: " + kind);
}

TcpEndpoint parse_endpoint(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint needs host:port: " + text);
  return {text.substr(0, colon), std::uint16_t(std::stoi(text.substr(colon + 1)))};
}

BitVec load_message(const RunArgs& args) {
  if (!args.message_file.empty()) {
    std::ifstream in(args.message_file, std::ios::binary);
    if (!in) throw ConfigError("cannot open message file: " + args.message_file);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return unpack_bits_msb(bytes, bytes.size() * 8);
  }
  if (!args.message_hex.empty()) {
    if (args.message_bits <= 0) throw ConfigError("--message-hex needs --message-bits");
    return bits_from_hex(args.message_hex, std::size_t(args.message_bits));
  }
  if (args.random_message > 0) {
    SplitmixBits rng(args.seed ^ 0xabcdefull);
    return rng.next_bits(std::size_t(args.random_message));
  }
  throw ConfigError("message protocol needs --message-file, --message-hex or --random-message");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

void write_ledger(const fs::path& path, const KeyFabric& fabric) {
  std::ostringstream out;
  out << "pair_a,pair_b,consumed_bits\n";
  std::uint64_t total = 0;
  for (int i = 0; i < fabric.n(); ++i)
    for (int j = i + 1; j < fabric.n(); ++j) {
      auto used = fabric.consumed(PartyId{i}, PartyId{j});
      total += used;
      out << i << ',' << j << ',' << used << '\n';
    }
  out << "total,," << total << '\n';
  write_text(path, out.str());
}

// ---------------------------------------------------------------------------

int cmd_keygen(const KeygenArgs& args) {
  auto fabric = KeyFabric::generate(args.n, std::size_t(args.bits), args.re, args.seed);
  fabric.save_file(args.out);
  std::printf("wrote %s: n=%d pairs=%zu bits_per_pair=%llu r_e=%g seed=%llu\n",
              args.out.c_str(), fabric.n(), fabric.pair_count(),
              (unsigned long long)fabric.bits_per_pair(), fabric.error_rate(),
              (unsigned long long)fabric.seed());
  for (int i = 0; i < fabric.n(); ++i)
    for (int j = i + 1; j < fabric.n(); ++j) {
      const auto& pk = fabric.pair(PartyId{i}, PartyId{j});
      std::size_t mismatches = 0;
      for (std::size_t k = 0; k < pk.copy_a.size(); ++k)
        if (pk.copy_a[k] != pk.copy_b[k]) ++mismatches;
      std::printf("  pair {%d,%d}: %zu bits, %zu mismatched\n", i, j, pk.copy_a.size(),
                  mismatches);
    }
  return kExitOk;
}

SessionConfig session_from(const RunArgs& args, int n) {
  SessionConfig cfg;
  cfg.session_id = args.session;
  cfg.n = n;
  cfg.beta = args.beta;
  cfg.repetition = args.rep;
  cfg.rng_seed = args.seed;
  if (!args.amd_modulus.empty()) cfg.amd_modulus = gf2::parse_poly(args.amd_modulus);
  return cfg;
}

std::vector<std::vector<Bit>> parse_notify(const std::string& text, int n) {
  std::vector<std::vector<Bit>> targets(std::size_t(n), std::vector<Bit>(std::size_t(n), 0));
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("--notify needs J:I pairs");
    int from = std::stoi(item.substr(0, colon));
    int to = std::stoi(item.substr(colon + 1));
    if (from < 0 || from >= n || to < 0 || to >= n || from == to)
      throw ConfigError("--notify pair out of range");
    targets[std::size_t(from)][std::size_t(to)] = 1;
  }
  return targets;
}

int run_sim(const RunArgs& args, KeyFabric& fabric) {
  const int n = fabric.n();
  auto cfg = session_from(args, n);
  auto policy = parse_adversary(args.adversary);
  fs::path out_dir = args.out_dir.empty() ? fs::path{} : fs::path(args.out_dir);
  if (!out_dir.empty()) fs::create_directories(out_dir);

  auto finish = [&](const std::string& outcome, const std::vector<Transcript>& transcripts,
                    std::uint64_t consumed,
                    std::optional<analysis::Protocol> proto) {
    std::printf("outcome: %s\n", outcome.c_str());
    std::printf("consumed: %llu bits network-wide\n", (unsigned long long)consumed);
    if (proto) {
      std::optional<int> m;
      if (*proto == analysis::Protocol::message && args.random_message > 0)
        m = int(args.random_message);
      if (*proto != analysis::Protocol::message || m) {
        auto report = analysis::BudgetReport::make(*proto, n, args.beta, m, consumed);
        std::printf("budget: formula=%llu measured=%llu match=%s\n",
                    (unsigned long long)report.formula_bits,
                    (unsigned long long)report.measured_bits, report.match ? "yes" : "no");
      }
    }
    if (!out_dir.empty()) {
      for (std::size_t p = 0; p < transcripts.size(); ++p)
        write_text(out_dir / ("transcript_p" + std::to_string(p) + ".log"),
                   transcripts[p].to_log());
      write_ledger(out_dir / "ledger.csv", fabric);
      write_text(out_dir / "outcome.txt", outcome + "\n");
    }
    return kExitOk;
  };

  if (args.protocol == "broadcast") {
    auto run = sim_broadcast(cfg, fabric, parse_bit_string(args.input, n), policy);
    return finish("parity=" + std::to_string(int(run.results[0])), run.transcripts,
                  run.consumed_bits, analysis::Protocol::broadcast);
  }
  if (args.protocol == "veto") {
    auto run = sim_veto(cfg, fabric, parse_bit_string(args.input, n), policy);
    return finish("veto=" + std::to_string(int(run.results[0])), run.transcripts,
                  run.consumed_bits, analysis::Protocol::veto);
  }
  if (args.protocol == "notify") {
    auto run = sim_notification(cfg, fabric, parse_notify(args.notify, n), policy);
    std::string outcome = "notified=";
    for (Bit f : run.results) outcome += char('0' + f);
    return finish(outcome, run.transcripts, run.consumed_bits,
                  analysis::Protocol::notification);
  }
  if (args.protocol == "collision") {
    auto run = sim_collision(cfg, fabric, parse_bit_string(args.input, n), policy);
    return finish("collision_verdict=" + std::to_string(int(run.results[0])), run.transcripts,
                  run.consumed_bits, analysis::Protocol::collision);
  }
  if (args.protocol == "message") {
    if (args.sender < 0 || args.receiver < 0)
      throw ConfigError("message protocol needs --sender and --receiver");
    BitVec message = load_message(args);
    auto params = amd::derive_params(int(message.size()), args.beta, cfg.amd_modulus);
    std::printf("message: m=%zu m'=%d (d=%d gamma=%d b=%s)\n", message.size(),
                params.encoded_bits(), params.d, params.gamma,
                gf2::format_poly(params.ctx.modulus()).c_str());
    auto run = sim_message(cfg, fabric, PartyId{args.sender}, PartyId{args.receiver}, message,
                           policy);
    std::string outcome = MessageOutcome::name(run.results[0].kind);
    if (run.results[std::size_t(args.receiver)].message && !out_dir.empty())
      write_text(out_dir / "message.hex",
                 bits_to_hex(*run.results[std::size_t(args.receiver)].message) + "\n");
    int code = finish(outcome, run.transcripts, run.consumed_bits, std::nullopt);
    auto budget = analysis::key_budget(analysis::Protocol::message, n, args.beta,
                                       int(message.size()));
    std::printf("budget: table=%.1f exact=%llu measured=%llu\n", budget.table_bits,
                (unsigned long long)budget.exact_bits,
                (unsigned long long)run.consumed_bits);
    return code;
  }
  throw ConfigError("unknown protocol: " + args.protocol);
}

int run_tcp(const RunArgs& args, KeyFabric& fabric) {
  const int n = fabric.n();
  if (args.party < 0 || args.party >= n) throw ConfigError("--party required for tcp");
  if (parse_adversary(args.adversary).mode != AdversaryPolicy::Mode::honest)
    throw ConfigError("adversary hooks are simulator-only");

  std::vector<TcpEndpoint> eps;
  {
    std::istringstream in(args.peers);
    std::string item;
    while (std::getline(in, item, ',')) eps.push_back(parse_endpoint(item));
  }
  if (int(eps.size()) != n) throw ConfigError("--peers must list one host:port per party");

  TcpConfig tc;
  tc.session_id = args.session;
  tc.me = PartyId{args.party};
  tc.n = n;
  auto listen = parse_endpoint(args.listen);
  tc.listen_host = listen.host;
  tc.listen_port = listen.port ? listen.port : eps[std::size_t(args.party)].port;
  tc.salt_seed = args.seed ^ 0x5a17u;
  tc.round_timeout = std::chrono::milliseconds(args.round_timeout_ms);
  TcpMeshTransport transport(tc);
  transport.connect_mesh(eps);

  auto cfg = session_from(args, n);
  Party party(cfg, PartyId{args.party}, fabric, transport);

  std::string outcome;
  if (args.protocol == "broadcast") {
    outcome = "parity=" + std::to_string(int(party.run_broadcast(parse_bit_string(args.input, 1)[0])));
  } else if (args.protocol == "veto") {
    outcome = "veto=" + std::to_string(int(party.run_veto(parse_bit_string(args.input, 1)[0])));
  } else if (args.protocol == "notify") {
    auto targets = parse_notify(args.notify, n);
    outcome = "notified=" + std::to_string(int(party.run_notification(
                                 targets[std::size_t(args.party)])));
  } else if (args.protocol == "collision") {
    outcome = "collision_verdict=" +
              std::to_string(int(party.run_collision_detection(parse_bit_string(args.input, 1)[0])));
  } else if (args.protocol == "message") {
    if (args.sender < 0 || args.receiver < 0)
      throw ConfigError("message protocol needs --sender and --receiver");
    int m = args.message_bits;
    MessageRole role = MessageRole::bystanding();
    if (args.party == args.sender) {
      BitVec message = load_message(args);
      m = int(message.size());
      role = MessageRole::sender_of(std::move(message), PartyId{args.receiver});
    } else if (args.party == args.receiver) {
      role = MessageRole::receiving();
    }
    if (args.random_message > 0) m = int(args.random_message);
    if (m <= 0) throw ConfigError("non-senders need --message-bits (public length)");
    auto res = party.run_message_transmission(role, m);
    outcome = MessageOutcome::name(res.kind);
    if (res.message) {
      std::printf("message: %s\n", bits_to_hex(*res.message).c_str());
      if (!args.out_dir.empty()) {
        fs::create_directories(args.out_dir);
        write_text(fs::path(args.out_dir) / "message.hex", bits_to_hex(*res.message) + "\n");
      }
    }
  } else {
    throw ConfigError("unknown protocol: " + args.protocol);
  }

  std::printf("outcome: %s\n", outcome.c_str());
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / ("transcript_p" + std::to_string(args.party) + ".log"),
               party.transcript().to_log());
    write_ledger(fs::path(args.out_dir) / ("ledger_p" + std::to_string(args.party) + ".csv"),
                 fabric);
    write_text(fs::path(args.out_dir) / ("outcome_p" + std::to_string(args.party) + ".txt"),
               outcome + "\n");
  }
  return kExitOk;
}

int cmd_run(const RunArgs& args) {
  std::optional<KeyFabric> fabric;
  if (!args.fabric_path.empty()) {
    fabric = KeyFabric::load_file(args.fabric_path);
  } else if (args.ephemeral_bits > 0) {
    if (args.n < 3) throw ConfigError("--ephemeral-bits needs --n");
    fabric = KeyFabric::generate(args.n, std::size_t(args.ephemeral_bits), 0.0, args.seed);
  } else {
    throw ConfigError("run needs --fabric or --ephemeral-bits");
  }
  if (args.n > 0 && fabric->n() != args.n)
    throw ConfigError("--n does not match the fabric file");

  if (args.transport == "sim") return run_sim(args, *fabric);
  if (args.transport == "tcp") return run_tcp(args, *fabric);
  throw ConfigError("unknown transport: " + args.transport);
}

int cmd_analyze(const AnalyzeArgs& args) {
  fs::create_directories(args.out_dir);

  {
    std::ostringstream out;
    out << "m,beta,gamma,efficiency\n";
    for (int m = 64; m <= 65536; m *= 2) {
      auto params = amd::derive_params(m, args.beta);
      out << m << ',' << args.beta << ',' << params.gamma << ','
          << analysis::encoding_efficiency(m, args.beta) << '\n';
    }
    write_text(fs::path(args.out_dir) / "efficiency.csv", out.str());
  }

  {
    std::ostringstream out;
    out << "re,n,E_parity,E_prime_N5\n";
    for (double re : {1e-4, 1e-3, 1e-2}) {
      double e = analysis::parity_error_rate(re, args.n);
      out << re << ',' << args.n << ',' << e << ',' << analysis::repetition_residual(e, 5)
          << '\n';
    }
    write_text(fs::path(args.out_dir) / "error_model.csv", out.str());
  }

  {
    // measured column comes from instrumented honest runs on the simulator
    std::ostringstream out;
    out << "protocol,n,beta,formula_bits,measured_bits\n";
    const int n = args.n, beta = args.beta;
    SessionConfig cfg;
    cfg.session_id = 99;
    cfg.n = n;
    cfg.beta = beta;
    cfg.rng_seed = args.seed;
    // per pair: 4*n*beta + 1 for the first four protocols, then the
    // message pipeline's m' + 4*n*beta
    std::size_t mprime = std::size_t(amd::derive_params(args.message_bits, beta).encoded_bits());
    std::size_t need = mprime + std::size_t(8 * n * beta) + 16;
    auto fabric = KeyFabric::generate(n, need, 0.0, args.seed);
    const std::vector<Bit> zeros(std::size_t(n), 0);

    auto row = [&](analysis::Protocol proto, std::optional<int> m, std::uint64_t measured) {
      out << analysis::protocol_name(proto) << ',' << n << ',' << beta << ','
          << analysis::key_budget(proto, n, beta, m).exact_bits << ',' << measured << '\n';
    };
    row(analysis::Protocol::broadcast, {}, sim_broadcast(cfg, fabric, zeros).consumed_bits);
    row(analysis::Protocol::veto, {}, sim_veto(cfg, fabric, zeros).consumed_bits);
    row(analysis::Protocol::notification, {},
        sim_notification(cfg, fabric,
                         std::vector<std::vector<Bit>>(std::size_t(n), zeros))
            .consumed_bits);
    row(analysis::Protocol::collision, {}, sim_collision(cfg, fabric, zeros).consumed_bits);

    SplitmixBits mrng(args.seed + 1);
    BitVec message = mrng.next_bits(std::size_t(args.message_bits));
    row(analysis::Protocol::message, args.message_bits,
        sim_message(cfg, fabric, PartyId{0}, PartyId{1}, message).consumed_bits);
    write_text(fs::path(args.out_dir) / "budgets.csv", out.str());
  }

  std::printf("wrote %s/{efficiency,error_model,budgets}.csv\n", args.out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anonymous multi-party protocols over pairwise one-time-pad key stores"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "session descriptor file; keys mirror the flags under a [run] / [keygen] / [analyze] section");

  KeygenArgs kg;
  auto* keygen = app.add_subcommand("keygen", "generate a pairwise key fabric file");
  keygen->add_option("-n,--n", kg.n, "party count (>= 3)")->required();
  keygen->add_option("--bits", kg.bits, "bits per pair")->required();
  keygen->add_option("--re", kg.re, "per-bit mismatch probability")->check(CLI::Range(0.0, 1.0));
  keygen->add_option("--seed", kg.seed, "RNG seed");
  keygen->add_option("-o,--out", kg.out, "output file");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "execute a protocol session");
  run->add_option("--protocol", ra.protocol, "broadcast|veto|notify|collision|message")
      ->required();
  run->add_option("--transport", ra.transport, "sim|tcp");
  run->add_option("--fabric", ra.fabric_path, "fabric file");
  run->add_option("--ephemeral-bits", ra.ephemeral_bits, "generate an in-memory fabric instead");
  run->add_option("--n", ra.n, "party count cross-check");
  run->add_option("--beta", ra.beta, "security parameter");
  run->add_option("--rep", ra.rep, "repetition-code length N (odd)");
  run->add_option("--seed", ra.seed, "session RNG seed");
  run->add_option("--session", ra.session, "session id");
  run->add_option("--input", ra.input, "input bits (one char per party; one char on tcp)");
  run->add_option("--notify", ra.notify, "notification pairs J:I[,J:I...]");
  run->add_option("--sender", ra.sender, "message sender party");
  run->add_option("--receiver", ra.receiver, "message receiver party");
  run->add_option("--message-hex", ra.message_hex, "message content (hex)");
  run->add_option("--message-bits", ra.message_bits, "message length in bits");
  run->add_option("--message-file", ra.message_file, "message content (binary file)");
  run->add_option("--random-message", ra.random_message, "random message of this many bits");
  run->add_option("--adversary", ra.adversary, "none|rushing:P|silent:P|bitflip:P@ROUND");
  run->add_option("--out-dir", ra.out_dir, "write transcripts, ledger, outcome here");
  run->add_option("--amd-modulus", ra.amd_modulus, "explicit b(x), e.g. x^22+x+1");
  run->add_option("--party", ra.party, "this node's party id (tcp)");
  run->add_option("--listen", ra.listen, "listen host:port (tcp)");
  run->add_option("--peers", ra.peers, "host:port per party, comma separated (tcp)");
  run->add_option("--round-timeout-ms", ra.round_timeout_ms, "per-round timeout (tcp)");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "emit closed-form tables as CSV");
  analyze->add_option("--out-dir", an.out_dir, "output directory");
  analyze->add_option("--n", an.n, "party count for the tables");
  analyze->add_option("--beta", an.beta, "security parameter");
  analyze->add_option("--message-bits", an.message_bits, "message length for the budget row");
  analyze->add_option("--seed", an.seed, "seed for the measured runs");

  try {
    app.parse(argc, argv);
    if (keygen->parsed()) return cmd_keygen(kg);
    if (run->parsed()) return cmd_run(ra);
    if (analyze->parsed()) return cmd_analyze(an);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const KeysDepleted& e) {
    std::fprintf(stderr, "protocol abort: %s\n", e.what());
    return kExitProtocolAbort;
  } catch (const CommitmentMismatch& e) {
    std::fprintf(stderr, "transport failure: %s\n", e.what());
    return kExitTransport;
  } catch (const RefusedToBroadcast& e) {
    std::fprintf(stderr, "protocol abort: %s\n", e.what());
    return kExitProtocolAbort;
  } catch (const SessionAborted& e) {
    std::fprintf(stderr, "transport failure: %s\n", e.what());
    return kExitTransport;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitProtocolAbort;
  }
}
