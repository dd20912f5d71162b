// Small end-to-end run: generate a block-angular lasso, compare the four
// stepsize rules, then race hydra2 against hydra with the same seed.

#include <cstdio>
#include <memory>

#include "hydra2/hydra2.hpp"

using namespace hydra2;

int main() {
  GenOptions g;
  g.rows = 4000;
  g.cols = 16000;
  g.c = 8;
  g.avg_nnz_per_row = 12;
  g.max_nnz_per_row = 120;
  g.seed = 11;
  auto gen = generate_block_angular(g);
  std::printf("A: %zu x %zu, nnz %zu, %zu coupling rows\n", gen.data.A.rows(), gen.data.A.cols(), gen.stats.nnz,
              gen.stats.global_rows);

  auto a = std::make_shared<SparseMatrix>(std::move(gen.data.A));
  const auto p = partition_uniform(a->cols(), g.c);
  const auto st = row_stats(*a, p);
  const std::size_t tau = 100;

  for (auto rule : {StepsizeRule::D1, StepsizeRule::D2, StepsizeRule::D3, StepsizeRule::D4}) {
    const auto D = compute_stepsize(rule, *a, p, st, tau);
    double sum = 0.0;
    for (double v : D.values) sum += v;
    std::printf("%s mean D_ii %.4f\n", to_string(rule), sum / double(D.size()));
  }

  const auto prob = make_lasso(a, gen.data.targets, 1.0);
  SolverConfig cfg;
  cfg.tau = tau;
  cfg.c = g.c;
  cfg.D = compute_stepsize(StepsizeRule::D1, *a, p, st, tau);
  cfg.max_iter = 3000;
  cfg.monitor_every = 500;
  cfg.seed = 7;

  const auto acc = solve(cfg, prob);
  cfg.mode = Mode::Hydra;
  const auto plain = solve(cfg, prob);
  std::printf("%8s %16s %16s\n", "k", "hydra2", "hydra");
  for (std::size_t i = 0; i < acc.trace.size(); ++i) {
    std::printf("%8llu %16.8f %16.8f\n", (unsigned long long)acc.trace[i].k, acc.trace[i].objective,
                plain.trace[i].objective);
  }
}
