#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace hydra2;

namespace {

SparseMatrix matrix_e() {
  return SparseMatrix::from_triplets(3, 4, {{0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 2, 1}, {1, 3, 1}, {2, 0, 1}, {2, 3, 1}});
}

SparseMatrix identity(std::size_t n) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return SparseMatrix::from_triplets(n, n, t);
}

struct Fixture {
  SparseMatrix m;
  Partition p;
  RowStats st;
  Fixture(SparseMatrix mat, std::size_t c) : m(std::move(mat)), p(partition_uniform(m.cols(), c)), st(row_stats(m, p)) {}
};

}  // namespace

TEST(AlphaStar, MatrixETau1) {
  Fixture f(matrix_e(), 2);
  const auto a = compute_alpha_star(f.st, 1, 2, 2);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_DOUBLE_EQ(a[1], 1.75);
  EXPECT_DOUBLE_EQ(a[2], 1.5);
  EXPECT_THROW(compute_alpha_star(f.st, 3, 2), Error);
}

TEST(D1, MatrixETau1) {
  Fixture f(matrix_e(), 2);
  const auto d = compute_d1(f.m, compute_alpha_star(f.st, 1, 2), 1, 2);
  EXPECT_EQ(d.values, (std::vector<double>{2.5, 2.75, 1.75, 3.25}));
  EXPECT_EQ(d.rule, StepsizeRule::D1);
  const auto one = compute_stepsize(StepsizeRule::D1, SparseMatrix::from_triplets(1, 1, {{0, 0, 1}}),
                                    partition_uniform(1, 1), row_stats(SparseMatrix::from_triplets(1, 1, {{0, 0, 1}}), partition_uniform(1, 1)), 1);
  EXPECT_EQ(one.values, std::vector<double>{1.0});
}

TEST(D1, IdentityTau2) {
  Fixture f(identity(4), 2);
  const auto d = compute_stepsize(StepsizeRule::D1, f.m, f.p, f.st, 2);
  for (double v : d.values) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(D1, MatchesOracleFormula) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = 1 + rng() % 4, s = 1 + rng() % 8, n = 5 + rng() % 30;
    Fixture f(oracle::random_sparse(rng, n, c * s, 0.2), c);
    const std::size_t tau = 1 + rng() % s;
    const auto d = compute_stepsize(StepsizeRule::D1, f.m, f.p, f.st, tau);
    const auto ref = oracle::d1(oracle::dense(f.m), c, tau);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(d.values[i], ref[i], 1e-12 * ref[i]);
  }
}

TEST(BetaStar, Examples) {
  EXPECT_DOUBLE_EQ(compute_beta_star(1, 1, 3, 5).value, 1.0);
  const auto b = compute_beta_star(3, 2, 2, 4);
  EXPECT_NEAR(b.value, 1.0 + 2.0 / 3.0 + (0.5 - 1.0 / 3.0) * 0.5 * 3.0, 1e-15);
  EXPECT_NEAR(b.value, 1.9166666666666667, 1e-15);
  // tau = s: tau/s - (tau-1)/s1 = 1 - 1 = 0 for s >= 2.
  for (std::size_t s = 2; s < 10; ++s) EXPECT_GE(double(s) / double(s) - double(s - 1) / double(s_one(s)), 0.0);
}

TEST(D2, IdentityAndNormalizedData) {
  Fixture f(identity(2), 1);
  const auto d = compute_d2(f.m, f.st, 1.0, 1.0, 1, 2);
  EXPECT_EQ(d.values, (std::vector<double>{1.0, 1.0}));

  std::mt19937_64 rng(22);
  auto m = oracle::random_sparse(rng, 20, 12, 0.3);
  std::vector<double> scale(12);
  for (std::size_t i = 0; i < 12; ++i) {
    double acc = 0.0;
    for (double v : m.col(i).values) acc += v * v;
    scale[i] = 1.0 / std::sqrt(acc);
  }
  Fixture g(m.scale_columns(scale), 3);
  const auto sg = oracle::sigmas(g.m, 3);
  const auto d2 = compute_d2(g.m, g.st, sg.sigma, sg.sigma_prime, 2, 4);
  for (double v : d2.values) EXPECT_NEAR(v, *d2.meta.beta_star, 1e-12);
}

TEST(D2, MatrixEFromOracle) {
  Fixture f(matrix_e(), 2);
  const auto sg = oracle::sigmas(f.m, 2);
  const auto d = compute_d2(f.m, f.st, sg.sigma, sg.sigma_prime, 2, 2);
  const double beta = compute_beta_star(sg.sigma, sg.sigma_prime, 2, 2).value;
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(d.values[i], beta * f.st.col_sq_norms[i]);
}

TEST(D3, Examples) {
  Fixture e(matrix_e(), 2);
  const auto d = compute_d3(e.m, e.st, 2, 2);
  EXPECT_DOUBLE_EQ(*d.meta.factor, 6.0);
  EXPECT_DOUBLE_EQ(d.values[0], 12.0);
  Fixture id(identity(4), 2);
  EXPECT_DOUBLE_EQ(*compute_d3(id.m, id.st, 2, 2).meta.factor, 2.0);
  try {
    compute_d3(e.m, e.st, 1, 2);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::TauTooSmall);
  }
}

TEST(SigmaTilde, MatrixE) {
  Fixture f(matrix_e(), 2);
  const auto st = compute_sigma_tilde(f.m, f.st);
  EXPECT_EQ(st.v, (std::vector<double>{2.0, 2.5, 3.0, 2.5}));
  EXPECT_DOUBLE_EQ(st.sigma_tilde, 3.0);
}

TEST(D4, Examples) {
  Fixture id(identity(4), 2);
  const auto d = compute_d4(id.m, id.st, 1.0, 2, 2);
  EXPECT_DOUBLE_EQ(*d.meta.factor, 2.0);
  Fixture e(matrix_e(), 2);
  const auto d4 = compute_d4(e.m, e.st, 3.0, 2, 2);
  const auto d3 = compute_d3(e.m, e.st, 2, 2);
  EXPECT_DOUBLE_EQ(*d4.meta.factor, 6.0);
  EXPECT_EQ(d4.values, d3.values);
  EXPECT_THROW(compute_stepsize(StepsizeRule::D4, e.m, e.p, e.st, 1), Error);
}

TEST(D4, BelowD3OnRandom20x40) {
  std::mt19937_64 rng(23);
  Fixture f(oracle::random_sparse(rng, 20, 40, 0.15), 4);
  const auto d3 = compute_stepsize(StepsizeRule::D3, f.m, f.p, f.st, 3);
  const auto d4 = compute_stepsize(StepsizeRule::D4, f.m, f.p, f.st, 3);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_LE(d4.values[i], d3.values[i] * (1 + 1e-12));
}

TEST(D3D4, MatchOracleFormulas) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng() % 4, s = 2 + rng() % 8, n = 5 + rng() % 30;
    Fixture f(oracle::random_sparse(rng, n, c * s, 0.2), c);
    const std::size_t tau = 2 + rng() % (s - 1);
    const auto a = oracle::dense(f.m);
    const auto r3 = oracle::d3(a, c, tau), r4 = oracle::d4(a, c, tau);
    const auto d3 = compute_stepsize(StepsizeRule::D3, f.m, f.p, f.st, tau);
    const auto d4 = compute_stepsize(StepsizeRule::D4, f.m, f.p, f.st, tau);
    for (std::size_t i = 0; i < c * s; ++i) {
      EXPECT_NEAR(d3.values[i], r3[i], 1e-12 * r3[i]);
      EXPECT_NEAR(d4.values[i], r4[i], 1e-12 * r4[i]);
    }
  }
}

TEST(Power, SmallExamples) {
  Fixture id(identity(2), 1);
  auto est = compute_sigma_power(id.m, id.p);
  EXPECT_NEAR(est.sigma.value, 1.0, 1e-12);
  EXPECT_NEAR(est.sigma_prime.value, 1.0, 1e-12);

  Fixture row(SparseMatrix::from_triplets(1, 2, {{0, 0, 1}, {0, 1, 1}}), 2);
  est = compute_sigma_power(row.m, row.p);
  EXPECT_NEAR(est.sigma.value, 2.0, 1e-12);
  EXPECT_NEAR(est.sigma_prime.value, 2.0, 1e-12);
  const auto ref = oracle::sigmas(row.m, 2);
  EXPECT_NEAR(ref.sigma, 2.0, 1e-12);
  EXPECT_NEAR(ref.sigma_prime, 2.0, 1e-12);

  Fixture e(matrix_e(), 2);
  const auto sg = oracle::sigmas(e.m, 2);
  EXPECT_LE(sg.sigma, 3.0 + 1e-12);
  EXPECT_THROW(compute_sigma_power(e.m, e.p, {.tol = 0.0}), Error);
}

TEST(Power, WithinToleranceOfOracleAndMonotone) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng() % 4, s = 2 + rng() % 10, n = 5 + rng() % 40;
    Fixture f(oracle::random_sparse(rng, n, c * s, 0.15), c);
    const auto ref = oracle::sigmas(f.m, c);
    PowerIterationOptions opt;
    opt.tol = 1e-10;
    opt.max_iter = 20000;
    const auto est = compute_sigma_power(f.m, f.p, opt);
    // Rayleigh quotients are lower bounds that rise toward the top eigenvalue.
    EXPECT_LE(est.sigma.value, ref.sigma * (1 + 1e-9));
    EXPECT_LE(est.sigma_prime.value, ref.sigma_prime * (1 + 1e-9));
    EXPECT_NEAR(est.sigma.value, ref.sigma, 1e-4 * ref.sigma);
    EXPECT_NEAR(est.sigma_prime.value, ref.sigma_prime, 1e-4 * ref.sigma_prime);
    for (std::size_t k = 1; k < est.sigma.history.size(); ++k) {
      EXPECT_GE(est.sigma.history[k], est.sigma.history[k - 1] * (1 - 1e-12));
    }
    for (std::size_t k = 1; k < est.sigma_prime.history.size(); ++k) {
      EXPECT_GE(est.sigma_prime.history[k], est.sigma_prime.history[k - 1] * (1 - 1e-12));
    }
  }
}

TEST(Power, IterativeBlockSolverAgreesWithDense) {
  std::mt19937_64 rng(26);
  Fixture f(oracle::random_sparse(rng, 40, 60, 0.08), 3);
  PowerIterationOptions dense_opt{.tol = 1e-10, .max_iter = 5000};
  PowerIterationOptions cg_opt = dense_opt;
  cg_opt.dense_block_limit = 0;
  const auto a = compute_sigma_power(f.m, f.p, dense_opt);
  const auto b = compute_sigma_power(f.m, f.p, cg_opt);
  EXPECT_NEAR(a.sigma_prime.value, b.sigma_prime.value, 1e-6 * a.sigma_prime.value);
}

TEST(Power, ReportsNonConvergence) {
  std::mt19937_64 rng(27);
  Fixture f(oracle::random_sparse(rng, 40, 60, 0.1), 3);
  const auto est = compute_sigma_power(f.m, f.p, {.tol = 1e-15, .max_iter = 3});
  EXPECT_FALSE(est.sigma.converged);
  EXPECT_EQ(est.sigma.iterations, 3u);
  EXPECT_GT(est.sigma.value, 0.0);
}

// Lemma 7: (tau/s - (tau-1)/(s-1)) eta <= (1/(tau-1)) (1 + (tau-1)(eta-1)/(s-1)).
TEST(Properties, Lemma7Grid) {
  for (std::size_t s = 2; s <= 40; ++s) {
    for (std::size_t tau = 2; tau <= s; ++tau) {
      for (int g = 0; g <= 50; ++g) {
        const double eta = 1.0 + (double(s) - 1.0) * g / 50.0;
        const double t = double(tau), sd = double(s);
        const double lhs = (t / sd - (t - 1) / (sd - 1)) * eta;
        const double rhs = (1 + (t - 1) * (eta - 1) / (sd - 1)) / (t - 1);
        EXPECT_LE(lhs, rhs + 1e-12);
      }
    }
  }
}

// Lemmas 8 and 9 and the factor-2 bound on beta*, with oracle sigmas.
TEST(Properties, BetaAndSigmaBounds) {
  std::mt19937_64 rng(28);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 1 + rng() % 5, s = 2 + rng() % 10, n = 5 + rng() % 40;
    Fixture f(oracle::random_sparse(rng, n, c * s, 0.15), c);
    const auto sg = oracle::sigmas(f.m, c);
    const auto st = compute_sigma_tilde(f.m, f.st);
    EXPECT_LE(sg.sigma, st.sigma_tilde * (1 + 1e-9));
    EXPECT_LE(st.sigma_tilde, double(f.st.max_omega()) * (1 + 1e-12));
    EXPECT_LE(sg.sigma_prime, double(c) * (1 + 1e-9));
    for (std::size_t tau = 2; tau <= s; ++tau) {
      const auto b = compute_beta_star(sg.sigma, sg.sigma_prime, tau, s);
      EXPECT_GE(b.beta1, 1.0 - 1e-12);
      EXPECT_LE(b.value, (1 + 1.0 / (double(tau) - 1)) * b.beta1 * (1 + 1e-9));
      EXPECT_LE(b.value, 2 * b.beta1 * (1 + 1e-9));
    }
    const auto alpha = compute_alpha_star(f.st, 1 + rng() % s, s);
    for (double a : alpha) EXPECT_GE(a, 1.0 - 1e-12);
  }
}

TEST(Stepsize, ParseAndNames) {
  EXPECT_EQ(parse_rule("D3"), StepsizeRule::D3);
  EXPECT_EQ(parse_rule("d1"), StepsizeRule::D1);
  EXPECT_STREQ(to_string(StepsizeRule::D4), "D4");
  EXPECT_THROW(parse_rule("D5"), Error);
}

TEST(Stepsize, PaddingColumnsGetUnitStep) {
  auto m = matrix_e().with_padding(2);
  Fixture f(m, 3);
  for (auto rule : {StepsizeRule::D1, StepsizeRule::D3, StepsizeRule::D4}) {
    const auto d = compute_stepsize(rule, f.m, f.p, f.st, 2);
    EXPECT_EQ(d.values[4], 1.0);
    EXPECT_EQ(d.values[5], 1.0);
  }
}
