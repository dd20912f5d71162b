#pragma once

// Multi-worker execution of the solver.
//
// W workers split the c nodes into contiguous groups (W must divide c). A
// worker owns the columns, z and u entries of its nodes and keeps full
// replicas of r_u and r_z. Each iteration it updates its sampled coordinates,
// then all workers all-gather their residual deltas and every worker applies
// them in ascending node order. theta advances after the merge. The only
// cross-worker synchronization is that all-gather.
//
// Deterministic mode ships one delta per node; merging them in node order
// reproduces the single-process solver bit for bit, for any W. Fast mode
// sums a worker's node deltas before shipping (fewer records when nodes share
// rows) and only agrees with the single-process run up to rounding.
//
// Wire format (little-endian). Every transport payload is a sequence of
// blocks:
//   delta block:   u32 tag=1, u32 pad, u64 node, u64 iteration, u64 count,
//                  count x { u64 row, f64 dz, f64 du }
//   barrier block: u32 tag=2, u32 pad, u64 node, u64 iteration, u64 checksum
//   vector block:  u32 tag=3, u32 pad, u64 offset, u64 count, f64[count]
// The TCP transport frames each payload with a u64 byte length.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "hydra2/error.hpp"
#include "hydra2/problem.hpp"
#include "hydra2/sampling.hpp"
#include "hydra2/solver.hpp"

namespace hydra2 {

using Bytes = std::vector<char>;

// ---------------------------------------------------------------------------
// Encoding

namespace wire {

enum Tag : std::uint32_t { Delta = 1, Barrier = 2, Vector = 3 };

inline void put_u32(Bytes& b, std::uint32_t v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  b.insert(b.end(), p, p + 4);
}
inline void put_u64(Bytes& b, std::uint64_t v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  b.insert(b.end(), p, p + 8);
}
inline void put_f64(Bytes& b, double v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  b.insert(b.end(), p, p + 8);
}

class Reader {
 public:
  explicit Reader(const Bytes& b) : b_(b) {}
  bool done() const noexcept { return pos_ == b_.size(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }

 private:
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > b_.size()) throw Error(ErrorCode::FormatError, "truncated wire message");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const Bytes& b_;
  std::size_t pos_ = 0;
};

struct DeltaBlock {
  std::uint64_t node;
  std::uint64_t iteration;
  std::vector<DeltaRecord> records;
};

inline void encode_delta(Bytes& b, std::uint64_t node, std::uint64_t iteration,
                         std::span<const DeltaRecord> recs) {
  put_u32(b, Delta);
  put_u32(b, 0);
  put_u64(b, node);
  put_u64(b, iteration);
  put_u64(b, recs.size());
  for (const auto& r : recs) {
    put_u64(b, r.row);
    put_f64(b, r.dz);
    put_f64(b, r.du);
  }
}

inline void encode_barrier(Bytes& b, std::uint64_t node, std::uint64_t iteration, std::uint64_t checksum) {
  put_u32(b, Barrier);
  put_u32(b, 0);
  put_u64(b, node);
  put_u64(b, iteration);
  put_u64(b, checksum);
}

inline void encode_vector(Bytes& b, std::uint64_t offset, std::span<const double> v) {
  put_u32(b, Vector);
  put_u32(b, 0);
  put_u64(b, offset);
  put_u64(b, v.size());
  for (double x : v) put_f64(b, x);
}

inline void expect_tag(Reader& r, Tag tag) {
  const auto t = r.u32();
  r.u32();
  if (t != tag) throw Error(ErrorCode::FormatError, "unexpected wire block tag " + std::to_string(t));
}

inline std::vector<DeltaBlock> decode_deltas(const Bytes& b) {
  std::vector<DeltaBlock> out;
  Reader r(b);
  while (!r.done()) {
    expect_tag(r, Delta);
    DeltaBlock blk;
    blk.node = r.u64();
    blk.iteration = r.u64();
    const auto count = r.u64();
    if (count > b.size() / 24) throw Error(ErrorCode::FormatError, "record count exceeds message");
    blk.records.resize(count);
    for (auto& rec : blk.records) {
      rec.row = r.u64();
      rec.dz = r.f64();
      rec.du = r.f64();
    }
    out.push_back(std::move(blk));
  }
  return out;
}

struct BarrierBlock {
  std::uint64_t node;
  std::uint64_t iteration;
  std::uint64_t checksum;
};

inline BarrierBlock decode_barrier(const Bytes& b) {
  Reader r(b);
  expect_tag(r, Barrier);
  BarrierBlock blk{r.u64(), r.u64(), r.u64()};
  return blk;
}

/// Copies every vector block of `b` into `dst` at its offset.
inline void decode_vectors_into(const Bytes& b, std::span<double> dst) {
  Reader r(b);
  while (!r.done()) {
    expect_tag(r, Vector);
    const auto offset = r.u64();
    const auto count = r.u64();
    if (offset + count > dst.size()) throw Error(ErrorCode::FormatError, "vector block out of range");
    for (std::uint64_t k = 0; k < count; ++k) dst[offset + k] = r.f64();
  }
}

}  // namespace wire

// ---------------------------------------------------------------------------
// Transports

/// All-gather among a fixed group. exchange() blocks until every rank has
/// contributed and returns the payloads ordered by rank. Any failure in the
/// group surfaces as Error(TransportFailure) on every rank.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::size_t rank() const = 0;
  virtual std::size_t size() const = 0;
  virtual std::vector<Bytes> exchange(Bytes payload) = 0;
  /// Marks this rank as failed and releases everyone blocked in exchange().
  virtual void abort() = 0;
};

class InProcessHub : public std::enable_shared_from_this<InProcessHub> {
 public:
  explicit InProcessHub(std::size_t size) : size_(size), slots_(size) {}

  std::size_t size() const noexcept { return size_; }

  std::shared_ptr<const std::vector<Bytes>> exchange(std::size_t rank, Bytes payload) {
    std::unique_lock lock(mu_);
    check_failed();
    slots_[rank] = std::move(payload);
    const auto gen = generation_;
    if (++arrived_ == size_) {
      result_ = std::make_shared<const std::vector<Bytes>>(std::move(slots_));
      slots_.assign(size_, Bytes{});
      arrived_ = 0;
      ++generation_;
      cv_.notify_all();
      return result_;
    }
    cv_.wait(lock, [&] { return generation_ != gen || failed_node_.has_value(); });
    if (generation_ == gen) check_failed();
    return result_;
  }

  void fail(std::size_t rank) {
    std::lock_guard lock(mu_);
    if (!failed_node_) failed_node_ = rank;
    cv_.notify_all();
  }

 private:
  void check_failed() const {
    if (failed_node_) {
      throw Error(ErrorCode::TransportFailure, "worker " + std::to_string(*failed_node_) + " failed",
                  *failed_node_);
    }
  }

  std::size_t size_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Bytes> slots_;
  std::size_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  std::shared_ptr<const std::vector<Bytes>> result_;
  std::optional<std::size_t> failed_node_;
};

class InProcessTransport final : public Transport {
 public:
  InProcessTransport(std::shared_ptr<InProcessHub> hub, std::size_t rank) : hub_(std::move(hub)), rank_(rank) {}
  std::size_t rank() const override { return rank_; }
  std::size_t size() const override { return hub_->size(); }
  std::vector<Bytes> exchange(Bytes payload) override { return *hub_->exchange(rank_, std::move(payload)); }
  void abort() override { hub_->fail(rank_); }

 private:
  std::shared_ptr<InProcessHub> hub_;
  std::size_t rank_;
};

namespace detail {

inline void send_all(int fd, const char* data, std::size_t len, std::size_t peer) {
  while (len > 0) {
    const auto n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) throw Error(ErrorCode::TransportFailure, "send to worker " + std::to_string(peer) + " failed", peer);
    data += n;
    len -= std::size_t(n);
  }
}

inline void recv_all(int fd, char* data, std::size_t len, std::size_t peer) {
  while (len > 0) {
    const auto n = ::recv(fd, data, len, 0);
    if (n <= 0) throw Error(ErrorCode::TransportFailure, "lost connection to worker " + std::to_string(peer), peer);
    data += n;
    len -= std::size_t(n);
  }
}

inline void send_frame(int fd, const Bytes& b, std::size_t peer) {
  const std::uint64_t len = b.size();
  send_all(fd, reinterpret_cast<const char*>(&len), 8, peer);
  send_all(fd, b.data(), b.size(), peer);
}

inline Bytes recv_frame(int fd, std::size_t peer) {
  std::uint64_t len = 0;
  recv_all(fd, reinterpret_cast<char*>(&len), 8, peer);
  if (len > (std::uint64_t(1) << 36)) throw Error(ErrorCode::TransportFailure, "oversized frame", peer);
  Bytes b(len);
  recv_all(fd, b.data(), len, peer);
  return b;
}

inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace detail

/// Listening socket for rank 0 of a TCP group. Bind first, read port(), then
/// hand it to TcpTransport::accept_group.
class TcpListener {
 public:
  explicit TcpListener(std::uint16_t port = 0) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error(ErrorCode::TransportFailure, "socket() failed", 0);
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 64) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::TransportFailure, "cannot listen on port " + std::to_string(port), 0);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  std::uint16_t port() const noexcept { return port_; }
  int fd() const noexcept { return fd_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Star-shaped all-gather over TCP: ranks 1..W-1 send their payload to rank
/// 0, which returns the rank-ordered set to everyone.
class TcpTransport final : public Transport {
 public:
  /// Rank 0: waits for size-1 peers. Each peer introduces itself with its rank.
  static std::unique_ptr<TcpTransport> accept_group(TcpListener& listener, std::size_t size) {
    auto t = std::unique_ptr<TcpTransport>(new TcpTransport(0, size));
    t->peers_.assign(size, -1);
    for (std::size_t k = 1; k < size; ++k) {
      const int fd = ::accept(listener.fd(), nullptr, nullptr);
      if (fd < 0) throw Error(ErrorCode::TransportFailure, "accept() failed", 0);
      detail::set_nodelay(fd);
      std::uint64_t peer_rank = 0;
      detail::recv_all(fd, reinterpret_cast<char*>(&peer_rank), 8, k);
      if (peer_rank == 0 || peer_rank >= size || t->peers_[peer_rank] >= 0) {
        ::close(fd);
        throw Error(ErrorCode::ShardMismatch, "unexpected peer rank " + std::to_string(peer_rank));
      }
      t->peers_[peer_rank] = fd;
    }
    return t;
  }

  /// Ranks >= 1: connects to rank 0 on the loopback interface, retrying for
  /// up to `timeout`.
  static std::unique_ptr<TcpTransport> connect(std::uint16_t port, std::size_t rank, std::size_t size,
                                               std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
    auto t = std::unique_ptr<TcpTransport>(new TcpTransport(rank, size));
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
      addr.sin_port = htons(port);
      if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
        detail::set_nodelay(fd);
        t->server_ = fd;
        const std::uint64_t r = rank;
        detail::send_all(fd, reinterpret_cast<const char*>(&r), 8, 0);
        return t;
      }
      ::close(fd);
      if (std::chrono::steady_clock::now() > deadline) {
        throw Error(ErrorCode::TransportFailure, "cannot reach rank 0 on port " + std::to_string(port), 0);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  ~TcpTransport() override { close_all(); }

  std::size_t rank() const override { return rank_; }
  std::size_t size() const override { return size_; }

  std::vector<Bytes> exchange(Bytes payload) override {
    try {
      if (rank_ == 0) {
        std::vector<Bytes> all(size_);
        all[0] = std::move(payload);
        for (std::size_t k = 1; k < size_; ++k) all[k] = detail::recv_frame(peers_[k], k);
        for (std::size_t k = 1; k < size_; ++k) {
          for (const auto& b : all) detail::send_frame(peers_[k], b, k);
        }
        return all;
      }
      detail::send_frame(server_, payload, 0);
      std::vector<Bytes> all(size_);
      for (auto& b : all) b = detail::recv_frame(server_, 0);
      return all;
    } catch (const Error&) {
      close_all();
      throw;
    }
  }

  void abort() override { close_all(); }

 private:
  TcpTransport(std::size_t rank, std::size_t size) : rank_(rank), size_(size) {}

  void close_all() {
    for (auto& fd : peers_) {
      if (fd >= 0) {
        ::shutdown(fd, SHUT_RDWR);
        ::close(fd);
        fd = -1;
      }
    }
    if (server_ >= 0) {
      ::shutdown(server_, SHUT_RDWR);
      ::close(server_);
      server_ = -1;
    }
  }

  std::size_t rank_;
  std::size_t size_;
  std::vector<int> peers_;
  int server_ = -1;
};

// ---------------------------------------------------------------------------
// Replica consistency

/// FNV-1a over the bytes of (r_u, r_z, theta, k).
inline std::uint64_t replica_checksum(const Residuals& res, double theta, std::uint64_t k) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001B3ULL;
    }
  };
  feed(res.r_u.data(), res.r_u.size() * sizeof(double));
  feed(res.r_z.data(), res.r_z.size() * sizeof(double));
  feed(&theta, sizeof(theta));
  feed(&k, sizeof(k));
  return h;
}

struct ReplicaView {
  const Residuals* res;
  double theta;
  std::uint64_t k;
};

/// First row where two residual replicas differ, or nullopt.
inline std::optional<std::size_t> first_difference(const Residuals& a, const Residuals& b) {
  const auto n = std::min(a.r_z.size(), b.r_z.size());
  for (std::size_t j = 0; j < n; ++j) {
    if (std::memcmp(&a.r_z[j], &b.r_z[j], sizeof(double)) != 0 ||
        std::memcmp(&a.r_u[j], &b.r_u[j], sizeof(double)) != 0) {
      return j;
    }
  }
  if (a.r_z.size() != b.r_z.size()) return n;
  return std::nullopt;
}

/// Throws DesyncDetected (index = first differing row) unless all replicas
/// hash identically.
inline void checksum_barrier(std::span<const ReplicaView> shards) {
  if (shards.empty()) return;
  const auto ref = replica_checksum(*shards[0].res, shards[0].theta, shards[0].k);
  for (std::size_t w = 1; w < shards.size(); ++w) {
    if (replica_checksum(*shards[w].res, shards[w].theta, shards[w].k) == ref) continue;
    const auto row = first_difference(*shards[0].res, *shards[w].res);
    throw Error(ErrorCode::DesyncDetected,
                "replica of worker " + std::to_string(w) + " differs" +
                    (row ? " at row " + std::to_string(*row + 1) : std::string(" in theta or k")),
                row.value_or(0));
  }
}

// ---------------------------------------------------------------------------
// Worker loop

enum class ReductionMode { Deterministic, Fast };

struct FaultInjection {
  enum class Kind { None, Kill, PerturbResidual };
  Kind kind = Kind::None;
  std::size_t worker = 0;
  std::uint64_t iteration = 0;
  std::size_t row = 0;
};

struct DistributedOptions {
  std::size_t workers = 1;
  ReductionMode reduction = ReductionMode::Deterministic;
  std::uint64_t checksum_every = 0;  // 0: never
  FaultInjection fault;
};

struct WorkerStats {
  std::uint64_t iterations = 0;
  std::uint64_t checksums = 0;
  std::uint64_t records_sent = 0;
  /// Largest (records sent) - (sum of |D_i| over sampled i) seen; <= 0 means
  /// deltas never exceeded the sampled columns' supports.
  long long max_volume_excess = std::numeric_limits<long long>::min();
};

struct DistributedResult {
  std::vector<double> x;
  std::vector<TracePoint> trace;
  bool reached_target = false;
  std::uint64_t iterations = 0;
  std::vector<WorkerStats> stats;  // per worker, filled by the in-process runner
};

namespace detail {

struct Shard {
  std::size_t node_begin;
  std::size_t node_end;
  std::size_t coord_begin;
  std::size_t coord_end;
};

inline Shard shard_for(const Partition& p, std::size_t workers, std::size_t rank) {
  const std::size_t per = p.c / workers;
  return {rank * per, (rank + 1) * per, p.begin(rank * per), p.begin((rank + 1) * per)};
}

/// All-gathers owned slices of `owned` into a full-length vector.
inline std::vector<double> gather_vector(Transport& tr, std::span<const double> owned, std::size_t offset,
                                         std::size_t total) {
  Bytes msg;
  wire::encode_vector(msg, offset, owned);
  const auto all = tr.exchange(std::move(msg));
  std::vector<double> full(total, 0.0);
  for (const auto& b : all) wire::decode_vectors_into(b, full);
  return full;
}

}  // namespace detail

/// Runs one worker to completion. Every rank returns the same x and trace
/// (timestamps are local). Any local failure aborts the transport first so
/// that peers do not block.
inline DistributedResult run_worker(const SolverConfig& cfg, const CompositeProblem& prob, Transport& tr,
                                    const DistributedOptions& opt, WorkerStats* stats_out = nullptr) {
  try {
    const auto p = config_partition(cfg, prob);
    const std::size_t W = tr.size();
    if (W == 0 || p.c % W != 0) {
      throw Error(ErrorCode::ShardMismatch,
                  "c=" + std::to_string(p.c) + " nodes cannot be split over " + std::to_string(W) + " workers");
    }
    const auto shard = detail::shard_for(p, W, tr.rank());
    const std::size_t owned = shard.coord_end - shard.coord_begin;
    const std::uint64_t monitor = cfg.monitor_every ? cfg.monitor_every : default_monitor_every(p, cfg.tau);
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    SolverState st;
    st.mode = cfg.mode;
    st.tau = cfg.tau;
    st.s = p.s;
    st.theta = double(cfg.tau) / double(p.s);
    st.theta_out = st.theta;
    st.u.assign(owned, 0.0);
    st.z.assign(owned, 0.0);
    if (!cfg.z0.empty()) {
      std::copy(cfg.z0.begin() + long(shard.coord_begin), cfg.z0.begin() + long(shard.coord_end), st.z.begin());
    }
    st.res.r_u.assign(prob.rows(), 0.0);
    st.res.r_z.assign(prob.rows(), 0.0);
    const CoordView view{st.z, st.u, shard.coord_begin};

    DistributedSampler sampler(p, cfg.tau, cfg.seed);
    NodeDeltaBuilder builder(prob.rows());
    NodeDeltaBuilder worker_builder(prob.rows());
    std::vector<std::vector<DeltaRecord>> deltas(shard.node_end - shard.node_begin);
    std::vector<DeltaRecord> combined;
    std::vector<Index> coords(cfg.tau);
    WorkerStats stats;

    // Merges all workers' delta blocks in ascending node order.
    auto merge = [&](const std::vector<Bytes>& all, bool with_u) {
      std::vector<wire::DeltaBlock> blocks;
      for (const auto& b : all) {
        auto part = wire::decode_deltas(b);
        for (auto& blk : part) blocks.push_back(std::move(blk));
      }
      std::sort(blocks.begin(), blocks.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
      for (const auto& blk : blocks) apply_delta(st.res, blk.records, with_u);
    };

    // Residual (re)computation: per-node products of owned columns.
    auto rebuild_residuals = [&] {
      Bytes msg;
      for (std::size_t l = shard.node_begin; l < shard.node_end; ++l) {
        node_products(prob.A(), p, l, view, builder, deltas[l - shard.node_begin]);
        wire::encode_delta(msg, l, st.k, deltas[l - shard.node_begin]);
      }
      const auto all = tr.exchange(std::move(msg));
      std::fill(st.res.r_u.begin(), st.res.r_u.end(), 0.0);
      std::fill(st.res.r_z.begin(), st.res.r_z.end(), 0.0);
      merge(all, true);
    };

    auto monitor_now = [&] {
      const auto x_owned = reconstruct_x(st);
      const auto x = detail::gather_vector(tr, x_owned, shard.coord_begin, prob.cols());
      const auto r = reconstruct_residual(st);
      return evaluate_point(prob, x, r, st.k, cfg.l_star, elapsed());
    };

    auto checksum_now = [&] {
      const auto h = replica_checksum(st.res, st.theta, st.k);
      Bytes msg;
      wire::encode_barrier(msg, tr.rank(), st.k, h);
      const auto all = tr.exchange(std::move(msg));
      ++stats.checksums;
      bool mismatch = false;
      std::size_t bad_worker = 0;
      const auto ref = wire::decode_barrier(all[0]);
      for (std::size_t w = 1; w < all.size(); ++w) {
        const auto blk = wire::decode_barrier(all[w]);
        if (blk.checksum != ref.checksum || blk.iteration != ref.iteration) {
          mismatch = true;
          bad_worker = w;
          break;
        }
      }
      if (!mismatch) return;
      // Locate the first differing row against rank 0's replica.
      Bytes rep;
      wire::encode_vector(rep, 0, st.res.r_z);
      wire::encode_vector(rep, prob.rows(), st.res.r_u);
      const auto reps = tr.exchange(std::move(rep));
      std::vector<double> ref_vals(2 * prob.rows()), bad_vals(2 * prob.rows());
      wire::decode_vectors_into(reps[0], ref_vals);
      wire::decode_vectors_into(reps[bad_worker], bad_vals);
      std::size_t row = 0;
      for (std::size_t j = 0; j < 2 * prob.rows(); ++j) {
        if (std::memcmp(&ref_vals[j], &bad_vals[j], sizeof(double)) != 0) {
          row = j % prob.rows();
          break;
        }
      }
      throw Error(ErrorCode::DesyncDetected,
                  "replica of worker " + std::to_string(bad_worker) + " differs at row " + std::to_string(row + 1) +
                      " (iteration " + std::to_string(st.k) + ")",
                  row);
    };

    rebuild_residuals();

    DistributedResult out;
    out.trace.push_back(monitor_now());
    out.reached_target = target_reached(cfg, out.trace.back());

    while (!out.reached_target && st.k < cfg.max_iter) {
      if (opt.fault.kind == FaultInjection::Kind::Kill && opt.fault.worker == tr.rank() &&
          opt.fault.iteration == st.k) {
        throw Error(ErrorCode::TransportFailure, "worker " + std::to_string(tr.rank()) + " killed", tr.rank());
      }
      const auto sc = iteration_scalars(st);
      Bytes msg;
      std::size_t support = 0, sent = 0;
      for (std::size_t l = shard.node_begin; l < shard.node_end; ++l) {
        sampler.draw_node(l, st.k, coords);
        for (auto i : coords) support += prob.A().col(i).size();
        auto& dl = deltas[l - shard.node_begin];
        node_update(prob, cfg.D.values, st.res, sc, coords, view, builder, dl);
        if (opt.reduction == ReductionMode::Deterministic) {
          wire::encode_delta(msg, l, st.k, dl);
          sent += dl.size();
        }
      }
      if (opt.reduction == ReductionMode::Fast) {
        for (const auto& dl : deltas) {
          for (const auto& r : dl) worker_builder.add_entry(r.row, r.dz, r.du);
        }
        worker_builder.finish(combined);
        wire::encode_delta(msg, shard.node_begin, st.k, combined);
        sent += combined.size();
      }
      stats.records_sent += sent;
      stats.max_volume_excess = std::max(stats.max_volume_excess, (long long)sent - (long long)support);

      const auto all = tr.exchange(std::move(msg));
      merge(all, sc.u_coef != 0.0);
      advance_theta(st);
      ++stats.iterations;

      if (opt.fault.kind == FaultInjection::Kind::PerturbResidual && opt.fault.worker == tr.rank() &&
          opt.fault.iteration == st.k) {
        auto& v = st.res.r_z[opt.fault.row];
        v = std::nextafter(v, std::numeric_limits<double>::infinity());
      }
      if (refresh_due(cfg, st.k)) rebuild_residuals();
      if (opt.checksum_every && st.k % opt.checksum_every == 0) checksum_now();
      if (st.k % monitor == 0 || st.k == cfg.max_iter) {
        out.trace.push_back(monitor_now());
        out.reached_target = target_reached(cfg, out.trace.back());
      }
    }
    if (out.trace.back().k != st.k) out.trace.push_back(monitor_now());
    out.x = detail::gather_vector(tr, reconstruct_x(st), shard.coord_begin, prob.cols());
    out.iterations = st.k;
    if (stats_out) *stats_out = stats;
    return out;
  } catch (...) {
    tr.abort();
    throw;
  }
}

/// Runs `opt.workers` workers as threads over the in-process transport and
/// returns rank 0's result. If any worker fails, no result is returned: the
/// first failure is rethrown (the originating one when it can be told apart).
inline DistributedResult run_distributed(const SolverConfig& cfg, const CompositeProblem& prob,
                                         const DistributedOptions& opt) {
  const std::size_t W = opt.workers;
  if (W == 0 || cfg.c % W != 0) {
    throw Error(ErrorCode::ShardMismatch,
                "c=" + std::to_string(cfg.c) + " nodes cannot be split over " + std::to_string(W) + " workers");
  }
  auto hub = std::make_shared<InProcessHub>(W);
  std::vector<DistributedResult> results(W);
  std::vector<WorkerStats> stats(W);
  std::vector<std::exception_ptr> errors(W);
  std::vector<std::thread> threads;
  threads.reserve(W);
  for (std::size_t w = 0; w < W; ++w) {
    threads.emplace_back([&, w] {
      InProcessTransport tr(hub, w);
      try {
        results[w] = run_worker(cfg, prob, tr, opt, &stats[w]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();

  // Prefer the error that is not a secondary "peer failed" notification.
  std::exception_ptr first;
  for (std::size_t w = 0; w < W; ++w) {
    if (!errors[w]) continue;
    if (!first) first = errors[w];
    try {
      std::rethrow_exception(errors[w]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportFailure || e.index() == std::optional<std::size_t>(w)) {
        first = errors[w];
        break;
      }
    } catch (...) {
      first = errors[w];
      break;
    }
  }
  if (first) std::rethrow_exception(first);
  results[0].stats = std::move(stats);
  return std::move(results[0]);
}

}  // namespace hydra2
