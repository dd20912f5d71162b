#pragma once

// Synthetic block-angular LASSO data: c diagonal blocks (rows that only touch
// the columns of one node) plus a few denser coupling rows spanning all
// columns. The coupling rows are about 4x denser than local rows and make up
// ~0.5% of the rows; both choices are tunable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hydra2/error.hpp"
#include "hydra2/io.hpp"
#include "hydra2/sampling.hpp"
#include "hydra2/sparse_matrix.hpp"

namespace hydra2 {

struct GenOptions {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t c = 1;
  double avg_nnz_per_row = 0.0;
  std::size_t max_nnz_per_row = 0;
  std::uint64_t seed = 0;
  double global_row_fraction = 0.005;
  double global_density_ratio = 4.0;
  double noise = 0.1;
  double truth_density = 0.01;  // fraction of nonzeros in the planted solution
};

struct GenStats {
  std::size_t local_rows = 0;
  std::size_t global_rows = 0;
  std::size_t nnz = 0;
  double avg_nnz_per_row = 0.0;
  std::size_t max_nnz_per_row = 0;
};

struct GeneratedData {
  Dataset data;
  GenStats stats;
};

namespace detail {

inline double normal(SplitMix64& rng) {
  // Box-Muller; u1 in (0,1]
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline double nonzero_value(SplitMix64& rng) {
  double v = 0.0;
  while (v == 0.0) v = 2.0 * rng.uniform() - 1.0;
  return v;
}

/// k distinct values from [0, range), Floyd's algorithm, returned sorted.
inline void pick_distinct(SplitMix64& rng, std::size_t range, std::size_t k, std::vector<char>& mark,
                          std::vector<Index>& out) {
  out.clear();
  for (std::size_t j = range - k; j < range; ++j) {
    const auto t = rng.below(j + 1);
    if (!mark[t]) {
      mark[t] = 1;
      out.push_back(t);
    } else {
      mark[j] = 1;
      out.push_back(j);
    }
  }
  for (auto v : out) mark[v] = 0;
  std::sort(out.begin(), out.end());
}

}  // namespace detail

inline GeneratedData generate_block_angular(const GenOptions& opt) {
  const std::size_t n = opt.rows, d = opt.cols, c = opt.c;
  auto invalid = [](const std::string& why) { throw Error(ErrorCode::InvalidShape, why); };
  if (n == 0 || d == 0 || c == 0 || opt.max_nnz_per_row == 0 || !(opt.avg_nnz_per_row >= 1.0)) {
    invalid("rows, cols, c, avg and max nnz must be positive");
  }
  if (d % c != 0) invalid("cols=" + std::to_string(d) + " is not divisible by c=" + std::to_string(c));
  if (opt.avg_nnz_per_row > double(opt.max_nnz_per_row)) invalid("avg nnz exceeds max nnz");
  if (double(n) * opt.avg_nnz_per_row < double(d)) {
    invalid("rows * avg_nnz_per_row < cols: not every column can hold a nonzero");
  }
  const std::size_t s = d / c;
  const std::size_t cap_global = std::min(opt.max_nnz_per_row, d);
  const std::size_t cap_local = std::min(opt.max_nnz_per_row, s);

  std::size_t n_global = n >= 2 ? std::max<std::size_t>(1, std::size_t(std::lround(opt.global_row_fraction * double(n)))) : 0;
  if (n < c) invalid("need at least one local row per block");
  n_global = std::min(n_global, n - c);
  const std::size_t n_local = n - n_global;

  const double total = opt.avg_nnz_per_row * double(n);
  double g = std::clamp(opt.global_density_ratio * opt.avg_nnz_per_row, opt.avg_nnz_per_row, double(cap_global));
  double avg_local = (total - g * double(n_global)) / double(n_local);
  if (avg_local > double(cap_local)) {
    avg_local = double(cap_local);
    g = n_global ? (total - avg_local * double(n_local)) / double(n_global) : 0.0;
    if (g > double(cap_global)) invalid("requested density does not fit the block structure");
  } else if (avg_local < 1.0) {
    avg_local = 1.0;
    g = (total - double(n_local)) / double(n_global);
  }

  SplitMix64 rng(mix64(opt.seed ^ 0x6A09E667F3BCC909ULL));
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(total * 1.05) + d);
  std::vector<std::size_t> row_nnz(n, 0);
  std::vector<char> col_used(d, 0);
  std::vector<char> mark(d, 0);
  std::vector<Index> picks;

  auto draw_count = [&](double mean, std::size_t cap) {
    const double half = std::min(mean - 1.0, double(cap) - mean);
    const double k = std::round(mean + (2.0 * rng.uniform() - 1.0) * half);
    return std::size_t(std::clamp(k, 1.0, double(cap)));
  };

  // Local rows: block l owns rows [row_begin[l], row_begin[l+1]).
  std::vector<std::size_t> row_begin(c + 1, 0);
  for (std::size_t l = 0; l < c; ++l) row_begin[l + 1] = row_begin[l] + n_local / c + (l < n_local % c ? 1 : 0);
  for (std::size_t l = 0; l < c; ++l) {
    for (auto j = row_begin[l]; j < row_begin[l + 1]; ++j) {
      const auto k = draw_count(avg_local, cap_local);
      detail::pick_distinct(rng, s, k, mark, picks);
      for (auto off : picks) {
        const auto col = l * s + off;
        trip.push_back({Index(j), Index(col), detail::nonzero_value(rng)});
        col_used[col] = 1;
      }
      row_nnz[j] = k;
    }
  }
  for (std::size_t j = n_local; j < n; ++j) {
    const auto k = draw_count(g, cap_global);
    detail::pick_distinct(rng, d, k, mark, picks);
    for (auto col : picks) {
      trip.push_back({Index(j), col, detail::nonzero_value(rng)});
      col_used[col] = 1;
    }
    row_nnz[j] = k;
  }

  // Every column needs a nonzero: give uncovered ones an entry in a local row
  // of their block that still has room.
  for (std::size_t col = 0; col < d; ++col) {
    if (col_used[col]) continue;
    const auto l = col / s;
    const auto rows_in_block = row_begin[l + 1] - row_begin[l];
    const auto start = row_begin[l] + rng.below(rows_in_block);
    std::size_t j = start;
    std::size_t tries = 0;
    while (row_nnz[j] >= cap_local && tries < rows_in_block) {
      j = j + 1 == row_begin[l + 1] ? row_begin[l] : j + 1;
      ++tries;
    }
    if (tries == rows_in_block) invalid("block " + std::to_string(l + 1) + " cannot cover its columns");
    trip.push_back({Index(j), Index(col), detail::nonzero_value(rng)});
    ++row_nnz[j];
    col_used[col] = 1;
  }

  GeneratedData out;
  out.data.A = SparseMatrix::from_triplets(n, d, std::move(trip));
  out.data.c_hint = c;

  // b = A x_true + noise, x_true sparse with +-1 entries.
  std::vector<double> x_true(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (rng.uniform() < opt.truth_density) x_true[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  out.data.targets = out.data.A.multiply(x_true);
  for (auto& v : out.data.targets) v += opt.noise * detail::normal(rng);

  out.stats.local_rows = n_local;
  out.stats.global_rows = n_global;
  out.stats.nnz = out.data.A.nnz();
  out.stats.avg_nnz_per_row = double(out.stats.nnz) / double(n);
  out.stats.max_nnz_per_row = *std::max_element(row_nnz.begin(), row_nnz.end());
  return out;
}

}  // namespace hydra2
