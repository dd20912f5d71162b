#pragma once

#include <memory>

#include "hydra2/hydra2.hpp"

namespace fixtures {

struct LassoFixture {
  hydra2::CompositeProblem prob;
  hydra2::Partition part;
  hydra2::RowStats stats;
};

/// Block-angular lasso with lambda = ratio * ||A'b||_inf.
inline LassoFixture block_lasso(std::size_t rows, std::size_t cols, std::size_t c, double avg, std::size_t max_nnz,
                                std::uint64_t seed, double ratio = 0.1) {
  hydra2::GenOptions g;
  g.rows = rows;
  g.cols = cols;
  g.c = c;
  g.avg_nnz_per_row = avg;
  g.max_nnz_per_row = max_nnz;
  g.seed = seed;
  auto gen = hydra2::generate_block_angular(g);
  auto a = std::make_shared<hydra2::SparseMatrix>(std::move(gen.data.A));
  double lmax = 0.0;
  for (std::size_t i = 0; i < a->cols(); ++i) {
    const auto col = a->col(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < col.size(); ++k) acc += col.values[k] * gen.data.targets[col.indices[k]];
    lmax = std::max(lmax, std::abs(acc));
  }
  LassoFixture f{hydra2::make_lasso(a, std::move(gen.data.targets), ratio * lmax), hydra2::partition_uniform(cols, c), {}};
  f.stats = hydra2::row_stats(f.prob.A(), f.part);
  return f;
}

inline hydra2::SolverConfig config(const LassoFixture& f, hydra2::StepsizeRule rule, std::size_t tau,
                                   std::uint64_t seed, std::uint64_t iters) {
  hydra2::SolverConfig cfg;
  cfg.tau = tau;
  cfg.c = f.part.c;
  cfg.D = hydra2::compute_stepsize(rule, f.prob.A(), f.part, f.stats, tau);
  cfg.max_iter = iters;
  cfg.seed = seed;
  return cfg;
}

}  // namespace fixtures
