#pragma once

// Distributed tau-nice sampling: every node independently picks tau of its
// s coordinates uniformly at random; the sample is the union.
//
// Randomness is counter-based. The subset node l uses in iteration k is a
// pure function of (master_seed, l, k):
//
//   key = mix(mix(mix(master_seed) ^ (l + 1) * 0x9E3779B97F4A7C15) + k)
//
// seeds a SplitMix64 stream that drives a partial Fisher-Yates shuffle over
// the node's index buffer. The swaps are undone afterwards so the buffer is
// always the identity between draws. Hence a node produces the same subsets
// whether it runs alone, inside a single process, or on any worker layout.

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hydra2/error.hpp"
#include "hydra2/sparse_matrix.hpp"

namespace hydra2 {

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// SplitMix64; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept { return mix64(state_ += 0x9E3779B97F4A7C15ULL); }

  /// Uniform integer in [0, bound), bound > 0 (Lemire's multiply-shift with
  /// rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

inline constexpr std::uint64_t node_stream_seed(std::uint64_t master, std::uint64_t node,
                                                std::uint64_t iteration) noexcept {
  return mix64(mix64(mix64(master) ^ ((node + 1) * 0x9E3779B97F4A7C15ULL)) + iteration);
}

/// The coordinates picked in one iteration, node-major: node l's tau
/// coordinates occupy [l*tau, (l+1)*tau) and are ascending.
struct DistributedSample {
  std::size_t tau = 0;
  std::size_t c = 0;
  std::uint64_t iteration = 0;
  std::vector<Index> coords;

  std::span<const Index> node(std::size_t l) const {
    return std::span<const Index>(coords).subspan(l * tau, tau);
  }
  std::size_t size() const noexcept { return coords.size(); }
};

inline void check_tau(const Partition& p, std::size_t tau) {
  if (tau < 1 || tau > p.s) {
    throw Error(ErrorCode::TauOutOfRange,
                "tau=" + std::to_string(tau) + " must lie in [1, s=" + std::to_string(p.s) + "]");
  }
}

/// Draws node subsets. Holds one index buffer per node it serves; distinct
/// samplers share no state.
class DistributedSampler {
 public:
  DistributedSampler(const Partition& p, std::size_t tau, std::uint64_t master_seed)
      : p_(p), tau_(tau), seed_(master_seed), buffer_(p.s), swaps_(tau) {
    check_tau(p, tau);
    for (std::size_t k = 0; k < p.s; ++k) buffer_[k] = k;
  }

  /// Writes node l's sorted subset for `iteration` into out (size tau).
  void draw_node(std::size_t l, std::uint64_t iteration, std::span<Index> out) {
    const auto base = p_.begin(l);
    if (tau_ == p_.s) {
      for (std::size_t k = 0; k < tau_; ++k) out[k] = base + k;
      return;
    }
    SplitMix64 rng(node_stream_seed(seed_, l, iteration));
    for (std::size_t k = 0; k < tau_; ++k) {
      const auto r = k + rng.below(p_.s - k);
      std::swap(buffer_[k], buffer_[r]);
      swaps_[k] = r;
    }
    for (std::size_t k = 0; k < tau_; ++k) out[k] = base + buffer_[k];
    for (std::size_t k = tau_; k-- > 0;) std::swap(buffer_[k], buffer_[swaps_[k]]);
    std::sort(out.begin(), out.end());
  }

  DistributedSample draw(std::uint64_t iteration) {
    DistributedSample sample;
    sample.tau = tau_;
    sample.c = p_.c;
    sample.iteration = iteration;
    sample.coords.resize(p_.c * tau_);
    for (std::size_t l = 0; l < p_.c; ++l) {
      draw_node(l, iteration, std::span<Index>(sample.coords).subspan(l * tau_, tau_));
    }
    return sample;
  }

  std::size_t tau() const noexcept { return tau_; }
  const Partition& partition() const noexcept { return p_; }

 private:
  Partition p_;
  std::size_t tau_;
  std::uint64_t seed_;
  std::vector<Index> buffer_;
  std::vector<std::size_t> swaps_;
};

inline DistributedSample draw(const Partition& p, std::size_t tau, std::uint64_t master_seed,
                              std::uint64_t iteration) {
  return DistributedSampler(p, tau, master_seed).draw(iteration);
}

struct WeightedSample {
  DistributedSample sample;
  double probability;
};

/// Full support of the sampling: every combination of per-node tau-subsets,
/// each with probability prod_l 1/C(s, tau).
inline std::vector<WeightedSample> enumerate_all(const Partition& p, std::size_t tau,
                                                 std::size_t limit = 1'000'000) {
  check_tau(p, tau);
  // C(s, tau) per node; guard the product against the limit as it grows.
  double per_node = 1.0;
  for (std::size_t k = 0; k < tau; ++k) per_node = per_node * double(p.s - k) / double(k + 1);
  const auto per_node_count = static_cast<std::size_t>(per_node + 0.5);
  double total = 1.0;
  for (std::size_t l = 0; l < p.c; ++l) {
    total *= double(per_node_count);
    if (total > double(limit)) {
      throw Error(ErrorCode::TooLargeToEnumerate,
                  "support exceeds " + std::to_string(limit) + " samples");
    }
  }

  std::vector<std::vector<Index>> subsets;
  std::vector<Index> comb(tau);
  for (std::size_t k = 0; k < tau; ++k) comb[k] = k;
  while (true) {
    subsets.push_back(comb);
    std::size_t k = tau;
    while (k > 0 && comb[k - 1] == p.s - tau + (k - 1)) --k;
    if (k == 0) break;
    ++comb[k - 1];
    for (std::size_t m = k; m < tau; ++m) comb[m] = comb[m - 1] + 1;
  }

  const auto count = static_cast<std::size_t>(total + 0.5);
  const double prob = 1.0 / total;
  std::vector<WeightedSample> out;
  out.reserve(count);
  std::vector<std::size_t> digit(p.c, 0);
  for (std::size_t n = 0; n < count; ++n) {
    WeightedSample ws;
    ws.probability = prob;
    ws.sample.tau = tau;
    ws.sample.c = p.c;
    ws.sample.coords.reserve(p.c * tau);
    for (std::size_t l = 0; l < p.c; ++l) {
      for (auto i : subsets[digit[l]]) ws.sample.coords.push_back(p.begin(l) + i);
    }
    out.push_back(std::move(ws));
    for (std::size_t l = p.c; l-- > 0;) {
      if (++digit[l] < subsets.size()) break;
      digit[l] = 0;
    }
  }
  return out;
}

}  // namespace hydra2
