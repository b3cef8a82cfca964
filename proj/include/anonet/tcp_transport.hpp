// Full-mesh TCP transport with commit-reveal rounds.
//
// Wire protocol, network byte order throughout:
//
//   | u32 len | u8 type | u64 session | u64 round | u8 party | payload |
//
// `len` counts everything after itself. Types: HELLO (no payload),
// COMMIT (32-byte SHA-256 digest), REVEAL (1-byte bit + 16-byte salt),
// ANNOUNCE (1-byte bit), ABORT (1-byte reason code).
//
// Each round every announcer first broadcasts a binding commitment
// SHA-256(salt || session || round || party || bit), then, once all
// scheduled commitments arrived, reveals bit and salt. A reveal that
// fails to match its commitment aborts the protocol naming that party.
// There is no leader: a round completes at a node when all n-1 peer
// messages for it arrived.
#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "anonet/common.hpp"
#include "anonet/sha256.hpp"
#include "anonet/transport.hpp"

namespace anonet {

enum class FrameType : std::uint8_t {
  hello = 1,
  commit = 2,
  reveal = 3,
  announce = 4,
  abort_session = 5,
};

struct Frame {
  FrameType type = FrameType::hello;
  std::uint64_t session = 0;
  std::uint64_t round = 0;
  std::uint8_t party = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

namespace wire {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(std::uint8_t(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 18 + f.payload.size());
  put_u32(out, std::uint32_t(18 + f.payload.size()));
  out.push_back(std::uint8_t(f.type));
  put_u64(out, f.session);
  put_u64(out, f.round);
  out.push_back(f.party);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

/// Incremental decoder over a byte stream.
class FrameParser {
 public:
  void feed(const std::uint8_t* data, std::size_t len) {
    buf_.insert(buf_.end(), data, data + len);
  }

  std::optional<Frame> next() {
    if (buf_.size() < 4) return std::nullopt;
    std::uint32_t len = (std::uint32_t(buf_[0]) << 24) | (std::uint32_t(buf_[1]) << 16) |
                        (std::uint32_t(buf_[2]) << 8) | std::uint32_t(buf_[3]);
    if (len < 18 || len > kMaxFrame) throw SessionAborted("malformed frame length");
    if (buf_.size() < 4 + std::size_t(len)) return std::nullopt;
    Frame f;
    std::size_t at = 4;
    f.type = FrameType(buf_[at++]);
    f.session = take_u64(at);
    f.round = take_u64(at);
    f.party = buf_[at++];
    f.payload.assign(buf_.begin() + std::ptrdiff_t(at),
                     buf_.begin() + std::ptrdiff_t(4 + len));
    buf_.erase(buf_.begin(), buf_.begin() + std::ptrdiff_t(4 + len));
    return f;
  }

  /// Hand over any buffered, not-yet-parsed bytes.
  std::vector<std::uint8_t> drain() {
    std::vector<std::uint8_t> out(buf_.begin(), buf_.end());
    buf_.clear();
    return out;
  }

 private:
  static constexpr std::uint32_t kMaxFrame = 1 << 16;
  std::uint64_t take_u64(std::size_t& at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | buf_[at++];
    return v;
  }
  std::deque<std::uint8_t> buf_;
};

inline Sha256::Digest commitment_digest(const std::uint8_t salt[16], std::uint64_t session,
                                        std::uint64_t round, std::uint8_t party, Bit bit) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), salt, salt + 16);
  put_u64(buf, session);
  put_u64(buf, round);
  buf.push_back(party);
  buf.push_back(bit & 1);
  return Sha256::hash(buf);
}

}  // namespace wire

struct TcpEndpoint {
  std::string host;
  std::uint16_t port = 0;
};

struct TcpConfig {
  std::uint64_t session_id = 0;
  PartyId me;
  int n = 0;
  std::string listen_host = "127.0.0.1";
  std::uint16_t listen_port = 0;  // 0: ephemeral, see listen_port()
  std::chrono::milliseconds round_timeout{5000};
  std::chrono::milliseconds connect_timeout{30000};
  std::uint64_t salt_seed = 1;
  bool commit_reveal = true;  // plain ANNOUNCE mode exists for benchmarks only
};

class TcpMeshTransport final : public Transport {
 public:
  explicit TcpMeshTransport(const TcpConfig& cfg)
      : cfg_(cfg), salt_rng_(cfg.salt_seed ^ (0x9e3779b97f4a7c15ull * std::uint64_t(cfg.me.v + 1))) {
    if (cfg_.n < 3) throw ConfigError("tcp transport needs n >= 3");
    if (cfg_.me.v < 0 || cfg_.me.v >= cfg_.n) throw ConfigError("party id out of range");
    peer_fd_.assign(std::size_t(cfg_.n), -1);
    parsers_.resize(std::size_t(cfg_.n));
    dead_.assign(std::size_t(cfg_.n), false);
    open_listener();
  }

  ~TcpMeshTransport() override {
    for (int fd : peer_fd_)
      if (fd >= 0) ::close(fd);
    if (listen_fd_ >= 0) ::close(listen_fd_);
  }

  TcpMeshTransport(const TcpMeshTransport&) = delete;
  TcpMeshTransport& operator=(const TcpMeshTransport&) = delete;

  std::uint16_t listen_port() const { return bound_port_; }

  /// Establish the full mesh: dial every lower-indexed party, accept every
  /// higher-indexed one, identifying peers by HELLO frames. `peers[j]` is
  /// party j's listen endpoint; the own entry is ignored.
  void connect_mesh(const std::vector<TcpEndpoint>& peers) {
    if (int(peers.size()) != cfg_.n) throw ConfigError("need one endpoint per party");
    auto deadline = std::chrono::steady_clock::now() + cfg_.connect_timeout;
    for (int j = 0; j < cfg_.me.v; ++j) dial(PartyId{j}, peers[std::size_t(j)], deadline);
    for (int j = cfg_.me.v + 1; j < cfg_.n; ++j) accept_one(deadline);
    for (int j = 0; j < cfg_.n; ++j)
      if (j != cfg_.me.v && peer_fd_[std::size_t(j)] < 0)
        throw SessionAborted("mesh incomplete: no link to party " + std::to_string(j));
    ::close(listen_fd_);
    listen_fd_ = -1;
  }

  RoundResult exchange(RoundId round, std::optional<Bit> my_bit,
                       const Schedule& schedule) override {
    if (round.session != cfg_.session_id)
      throw ConfigError("round session id does not match transport session");
    return cfg_.commit_reveal ? exchange_commit_reveal(round, my_bit, schedule)
                              : exchange_plain(round, my_bit, schedule);
  }

  /// Tell all peers the session is over (reason codes documented in the
  /// README). Best effort.
  void send_abort(std::uint8_t reason) {
    Frame f{FrameType::abort_session, cfg_.session_id, 0, std::uint8_t(cfg_.me.v), {reason}};
    for (int j = 0; j < cfg_.n; ++j)
      if (j != cfg_.me.v && peer_fd_[std::size_t(j)] >= 0)
        try_write(PartyId{j}, wire::encode_frame(f));
  }

 private:
  using Clock = std::chrono::steady_clock;

  struct Reveal {
    Bit bit;
    std::array<std::uint8_t, 16> salt;
  };

  // -- socket plumbing ------------------------------------------------------

  void open_listener() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw SessionAborted("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(cfg_.listen_port);
    if (::inet_pton(AF_INET, cfg_.listen_host.c_str(), &addr.sin_addr) != 1)
      throw ConfigError("bad listen host: " + cfg_.listen_host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw SessionAborted("bind failed on " + cfg_.listen_host + ":" +
                           std::to_string(cfg_.listen_port));
    if (::listen(listen_fd_, cfg_.n) != 0) throw SessionAborted("listen failed");
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    bound_port_ = ntohs(bound.sin_port);
  }

  void dial(PartyId peer, const TcpEndpoint& ep, Clock::time_point deadline) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
      throw ConfigError("bad peer host: " + ep.host);
    for (;;) {
      int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) throw SessionAborted("socket() failed");
      if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
        setup_stream(fd);
        peer_fd_[std::size_t(peer.v)] = fd;
        Frame hello{FrameType::hello, cfg_.session_id, 0, std::uint8_t(cfg_.me.v), {}};
        write_all(peer, wire::encode_frame(hello));
        return;
      }
      ::close(fd);
      if (Clock::now() >= deadline)
        throw SessionAborted("connect to party " + std::to_string(peer.v) + " timed out");
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }

  void accept_one(Clock::time_point deadline) {
    for (;;) {
      pollfd pfd{listen_fd_, POLLIN, 0};
      int ms = remaining_ms(deadline);
      if (ms <= 0) throw SessionAborted("timed out waiting for inbound peers");
      if (::poll(&pfd, 1, ms) <= 0) continue;
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      setup_stream(fd);
      // the dialer introduces itself first
      wire::FrameParser parser;
      std::uint8_t buf[256];
      for (;;) {
        auto f = parser.next();
        if (f) {
          if (f->type != FrameType::hello || f->session != cfg_.session_id ||
              int(f->party) >= cfg_.n || int(f->party) == cfg_.me.v) {
            ::close(fd);
            throw SessionAborted("bad HELLO from inbound connection");
          }
          PartyId peer{int(f->party)};
          peer_fd_[std::size_t(peer.v)] = fd;
          // the peer may have pipelined frames right behind its HELLO;
          // keep them and dispatch whatever is already complete
          auto leftover = parser.drain();
          auto& own = parsers_[std::size_t(peer.v)];
          if (!leftover.empty()) own.feed(leftover.data(), leftover.size());
          while (auto early = own.next()) on_frame(peer, std::move(*early));
          return;
        }
        pollfd dfd{fd, POLLIN, 0};
        ms = remaining_ms(deadline);
        if (ms <= 0 || ::poll(&dfd, 1, ms) <= 0) {
          ::close(fd);
          throw SessionAborted("timed out reading HELLO");
        }
        ssize_t got = ::recv(fd, buf, sizeof buf, 0);
        if (got <= 0) {
          ::close(fd);
          throw SessionAborted("peer closed during HELLO");
        }
        parser.feed(buf, std::size_t(got));
      }
    }
  }

  static void setup_stream(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  static int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return int(std::max<std::int64_t>(0, left.count()));
  }

  void write_all(PartyId peer, const std::vector<std::uint8_t>& bytes) {
    int fd = peer_fd_[std::size_t(peer.v)];
    if (fd < 0) throw RefusedToBroadcast(peer);
    std::size_t off = 0;
    while (off < bytes.size()) {
      ssize_t put = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (put <= 0) {
        dead_[std::size_t(peer.v)] = true;
        throw RefusedToBroadcast(peer);
      }
      off += std::size_t(put);
    }
  }

  void try_write(PartyId peer, const std::vector<std::uint8_t>& bytes) {
    try {
      write_all(peer, bytes);
    } catch (const RefusedToBroadcast&) {
    }
  }

  void broadcast(const Frame& f) {
    auto bytes = wire::encode_frame(f);
    for (int j = 0; j < cfg_.n; ++j)
      if (j != cfg_.me.v) write_all(PartyId{j}, bytes);
  }

  // -- frame intake ---------------------------------------------------------

  void on_frame(PartyId from, Frame&& f) {
    if (f.session != cfg_.session_id) throw SessionAborted("frame with foreign session id");
    if (int(f.party) != from.v) throw SessionAborted("frame party does not match link");
    switch (f.type) {
      case FrameType::commit:
        if (f.payload.size() != 32) throw SessionAborted("bad COMMIT payload");
        if (!commits_.emplace(Key{f.round, from.v}, f.payload).second)
          throw SessionAborted("duplicate COMMIT");
        break;
      case FrameType::reveal: {
        if (f.payload.size() != 17) throw SessionAborted("bad REVEAL payload");
        Reveal r;
        r.bit = f.payload[0] & 1;
        std::memcpy(r.salt.data(), f.payload.data() + 1, 16);
        if (!reveals_.emplace(Key{f.round, from.v}, r).second)
          throw SessionAborted("duplicate REVEAL");
        break;
      }
      case FrameType::announce:
        if (f.payload.size() != 1) throw SessionAborted("bad ANNOUNCE payload");
        if (!announces_.emplace(Key{f.round, from.v}, Bit(f.payload[0] & 1)).second)
          throw SessionAborted("duplicate ANNOUNCE");
        break;
      case FrameType::abort_session:
        throw SessionAborted("peer " + std::to_string(from.v) + " aborted (reason " +
                             std::to_string(f.payload.empty() ? 0 : f.payload[0]) + ")");
      case FrameType::hello:
        break;  // stray duplicate, ignore
    }
  }

  /// Pump sockets until `have` is satisfied or the deadline passes.
  /// Returns false on deadline.
  bool pump_until(const std::function<bool()>& have, Clock::time_point deadline) {
    while (!have()) {
      std::vector<pollfd> pfds;
      std::vector<int> owner;
      for (int j = 0; j < cfg_.n; ++j) {
        int fd = peer_fd_[std::size_t(j)];
        if (j == cfg_.me.v || fd < 0 || dead_[std::size_t(j)]) continue;
        pfds.push_back(pollfd{fd, POLLIN, 0});
        owner.push_back(j);
      }
      if (pfds.empty()) return have();
      int ms = remaining_ms(deadline);
      if (ms <= 0) return false;
      int ready = ::poll(pfds.data(), nfds_t(pfds.size()), ms);
      if (ready <= 0) {
        if (Clock::now() >= deadline) return false;
        continue;
      }
      std::uint8_t buf[4096];
      for (std::size_t k = 0; k < pfds.size(); ++k) {
        if (!(pfds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        int j = owner[k];
        ssize_t got = ::recv(pfds[k].fd, buf, sizeof buf, 0);
        if (got < 0 && (errno == EINTR || errno == EAGAIN)) continue;
        if (got <= 0) {
          dead_[std::size_t(j)] = true;
          continue;
        }
        auto& parser = parsers_[std::size_t(j)];
        parser.feed(buf, std::size_t(got));
        while (auto f = parser.next()) on_frame(PartyId{j}, std::move(*f));
      }
    }
    return true;
  }

  // -- round logic ----------------------------------------------------------

  RoundResult exchange_commit_reveal(RoundId round, std::optional<Bit> my_bit,
                                     const Schedule& schedule) {
    auto deadline = Clock::now() + cfg_.round_timeout;

    std::array<std::uint8_t, 16> my_salt{};
    if (my_bit) {
      for (int i = 0; i < 2; ++i) {
        std::uint64_t w = salt_rng_.next();
        std::memcpy(my_salt.data() + 8 * i, &w, 8);
      }
      auto digest = wire::commitment_digest(my_salt.data(), round.session, round.seq,
                                            std::uint8_t(cfg_.me.v), *my_bit);
      Frame commit{FrameType::commit, round.session, round.seq, std::uint8_t(cfg_.me.v),
                   {digest.begin(), digest.end()}};
      broadcast(commit);
    }

    std::vector<PartyId> expected;
    for (PartyId q : schedule)
      if (q != cfg_.me) expected.push_back(q);

    auto all_commits = [&] {
      for (PartyId q : expected)
        if (!commits_.count(Key{round.seq, q.v})) return false;
      return true;
    };
    if (!pump_until(all_commits, deadline))
      throw RefusedToBroadcast(first_missing(expected, commits_, round.seq));

    if (my_bit) {
      Frame reveal{FrameType::reveal, round.session, round.seq, std::uint8_t(cfg_.me.v), {}};
      reveal.payload.push_back(*my_bit & 1);
      reveal.payload.insert(reveal.payload.end(), my_salt.begin(), my_salt.end());
      broadcast(reveal);
    }

    auto all_reveals = [&] {
      for (PartyId q : expected)
        if (!reveals_.count(Key{round.seq, q.v})) return false;
      return true;
    };
    if (!pump_until(all_reveals, deadline))
      throw RefusedToBroadcast(first_missing(expected, reveals_, round.seq));

    RoundResult res;
    res.schedule = schedule;
    res.bits.reserve(schedule.size());
    for (PartyId q : schedule) {
      if (q == cfg_.me) {
        res.bits.push_back(*my_bit & 1);
        continue;
      }
      const auto& commit = commits_.at(Key{round.seq, q.v});
      const Reveal& r = reveals_.at(Key{round.seq, q.v});
      auto digest = wire::commitment_digest(r.salt.data(), round.session, round.seq,
                                            std::uint8_t(q.v), r.bit);
      if (!std::equal(digest.begin(), digest.end(), commit.begin()))
        throw CommitmentMismatch(q);
      res.bits.push_back(r.bit);
    }
    gc(round.seq);
    return res;
  }

  RoundResult exchange_plain(RoundId round, std::optional<Bit> my_bit,
                             const Schedule& schedule) {
    auto deadline = Clock::now() + cfg_.round_timeout;
    if (my_bit) {
      Frame ann{FrameType::announce, round.session, round.seq, std::uint8_t(cfg_.me.v),
                {std::uint8_t(*my_bit & 1)}};
      broadcast(ann);
    }
    std::vector<PartyId> expected;
    for (PartyId q : schedule)
      if (q != cfg_.me) expected.push_back(q);
    auto all = [&] {
      for (PartyId q : expected)
        if (!announces_.count(Key{round.seq, q.v})) return false;
      return true;
    };
    if (!pump_until(all, deadline))
      throw RefusedToBroadcast(first_missing(expected, announces_, round.seq));
    RoundResult res;
    res.schedule = schedule;
    for (PartyId q : schedule)
      res.bits.push_back(q == cfg_.me ? Bit(*my_bit & 1) : announces_.at(Key{round.seq, q.v}));
    gc(round.seq);
    return res;
  }

  using Key = std::pair<std::uint64_t, int>;

  template <class Map>
  PartyId first_missing(const std::vector<PartyId>& expected, const Map& got,
                        std::uint64_t seq) const {
    for (PartyId q : expected)
      if (!got.count(Key{seq, q.v})) return q;
    return PartyId{-1};
  }

  void gc(std::uint64_t done_seq) {
    auto drop = [&](auto& map) {
      for (auto it = map.begin(); it != map.end();)
        it = it->first.first <= done_seq ? map.erase(it) : ++it;
    };
    drop(commits_);
    drop(reveals_);
    drop(announces_);
  }

  TcpConfig cfg_;
  Splitmix64 salt_rng_;
  int listen_fd_ = -1;
  std::uint16_t bound_port_ = 0;
  std::vector<int> peer_fd_;               // by party id, -1 for self/unconnected
  std::vector<wire::FrameParser> parsers_; // by party id
  std::vector<bool> dead_;
  std::map<Key, std::vector<std::uint8_t>> commits_;
  std::map<Key, Reveal> reveals_;
  std::map<Key, Bit> announces_;
};

}  // namespace anonet
