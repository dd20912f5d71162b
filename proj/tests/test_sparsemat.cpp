#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace hydra2;

namespace {

// 3x4, c=2: row1 {1,2}, row2 {2,3,4}, row3 {1,4}, all ones (1-based).
SparseMatrix matrix_e() {
  return SparseMatrix::from_triplets(3, 4, {{0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 2, 1}, {1, 3, 1}, {2, 0, 1}, {2, 3, 1}});
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::FormatError;
}

}  // namespace

TEST(Validate, IdentityIsOk) {
  EXPECT_NO_THROW(validate(SparseMatrix::from_triplets(2, 2, {{0, 0, 1}, {1, 1, 1}})));
}

TEST(Validate, EmptyColumnReportsIndex) {
  const auto m = SparseMatrix::from_triplets(2, 2, {{0, 0, 1}, {1, 0, 1}});
  try {
    validate(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyColumn);
    EXPECT_EQ(e.index(), std::optional<std::size_t>(1));
  }
}

TEST(Validate, EmptyRow) {
  const auto m = SparseMatrix::from_triplets(2, 2, {{0, 0, 1}, {0, 1, 1}});
  EXPECT_EQ(code_of([&] { validate(m); }), ErrorCode::EmptyRow);
}

TEST(Validate, MatrixE) { EXPECT_NO_THROW(validate(matrix_e())); }

TEST(Validate, RejectsBadTriplets) {
  EXPECT_EQ(code_of([] { SparseMatrix::from_triplets(2, 2, {{0, 2, 1}}); }), ErrorCode::IndexOutOfBounds);
  EXPECT_EQ(code_of([] { SparseMatrix::from_triplets(2, 2, {{0, 1, 1}, {0, 1, 2}}); }),
            ErrorCode::DuplicateEntry);
}

TEST(Validate, ExactZerosAreDropped) {
  const auto m = SparseMatrix::from_triplets(2, 2, {{0, 0, 1}, {1, 1, 1}, {0, 1, 0.0}});
  EXPECT_EQ(m.nnz(), 2u);
}

TEST(Validate, CorruptRowMirror) {
  auto m = matrix_e();
  std::vector<Index> rp(m.row_ptr().begin(), m.row_ptr().end());
  std::vector<Index> ci(m.col_indices().begin(), m.col_indices().end());
  std::vector<double> rv(m.row_values().begin(), m.row_values().end());
  rv[0] = 7.0;
  m.set_row_mirror(rp, ci, rv);
  EXPECT_EQ(code_of([&] { validate(m); }), ErrorCode::FormatError);
}

TEST(Validate, PaddingColumnsMayBeEmpty) {
  const auto m = matrix_e().with_padding(2);
  EXPECT_EQ(m.cols(), 6u);
  EXPECT_EQ(m.data_cols(), 4u);
  EXPECT_NO_THROW(validate(m));
}

TEST(Partition, Uniform) {
  const auto p = partition_uniform(4, 2);
  EXPECT_EQ(p.s, 2u);
  EXPECT_EQ(p.begin(1), 2u);
  EXPECT_EQ(p.end(1), 4u);
  EXPECT_EQ(p.node_of(3), 1u);
  EXPECT_EQ(partition_uniform(4, 1).s, 4u);
  EXPECT_EQ(partition_uniform(50'000'000'000ULL, 256).s, 195'312'500u);
  EXPECT_EQ(code_of([] { partition_uniform(5, 2); }), ErrorCode::NotDivisible);
}

TEST(RowStats, MatrixE) {
  const auto st = row_stats(matrix_e(), partition_uniform(4, 2));
  EXPECT_EQ(st.omega, (std::vector<std::size_t>{2, 3, 2}));
  EXPECT_EQ(st.omega_prime, (std::vector<std::size_t>{1, 2, 2}));
  EXPECT_EQ(st.col_sq_norms, (std::vector<double>{2, 2, 1, 2}));
}

TEST(RowStats, PartitionMismatch) {
  EXPECT_EQ(code_of([] { row_stats(matrix_e(), partition_uniform(6, 2)); }), ErrorCode::ShardMismatch);
}

TEST(RowStats, RandomBoundsAndBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t c = 1 + rng() % 4, s = 1 + rng() % 6, n = 3 + rng() % 20;
    const auto m = oracle::random_sparse(rng, n, c * s, 0.3);
    const auto st = row_stats(m, partition_uniform(c * s, c));
    const auto ref = oracle::structure(oracle::dense(m), c);
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_LE(st.omega_prime[j], st.omega[j]);
      EXPECT_LE(st.omega_prime[j], c);
      EXPECT_GE(st.omega_prime[j], 1u);
      if (c == 1) EXPECT_EQ(st.omega_prime[j], 1u);
      EXPECT_EQ(double(st.omega[j]), ref.omega[j]);
      EXPECT_EQ(double(st.omega_prime[j]), ref.omega_prime[j]);
    }
    for (std::size_t i = 0; i < c * s; ++i) EXPECT_NEAR(st.col_sq_norms[i], ref.col_sq[i], 1e-12 * ref.col_sq[i]);
  }
}

// omega_j = max{x'M_j x : x'D^{M_j} x <= 1}, omega'_j likewise with B^{M_j}.
TEST(RowStats, GeneralizedEigenCharacterization) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = 1 + rng() % 3, s = 2 + rng() % 3, n = 4 + rng() % 6;
    const auto m = oracle::random_sparse(rng, n, c * s, 0.4);
    const auto st = row_stats(m, partition_uniform(c * s, c));
    const auto a = oracle::dense(m);
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::MatrixXd mj = a.row(Eigen::Index(j)).transpose() * a.row(Eigen::Index(j));
      const Eigen::MatrixXd dj = mj.diagonal().asDiagonal();
      const double w = oracle::generalized_max(mj, dj);
      const double wp = oracle::generalized_max(mj, oracle::block_diag(mj, s));
      EXPECT_NEAR(w, double(st.omega[j]), 1e-8 * double(st.omega[j]));
      EXPECT_NEAR(wp, double(st.omega_prime[j]), 1e-8 * double(st.omega_prime[j]));
    }
  }
}

TEST(SparseMatrix, RowAndColumnTraversalsAgree) {
  std::mt19937_64 rng(13);
  const auto m = oracle::random_sparse(rng, 60, 80, 0.1);
  CompensatedSum by_col, by_row;
  for (std::size_t i = 0; i < m.cols(); ++i) {
    for (double v : m.col(i).values) by_col.add(v);
  }
  for (std::size_t j = 0; j < m.rows(); ++j) {
    for (double v : m.row(j).values) by_row.add(v);
  }
  EXPECT_NEAR(by_col.value(), by_row.value(), 1e-12 * std::abs(by_col.value()));
}

TEST(SparseMatrix, MultiplyMatchesDense) {
  std::mt19937_64 rng(14);
  const auto m = oracle::random_sparse(rng, 30, 20, 0.2);
  std::vector<double> x(20);
  for (auto& v : x) v = double(rng() % 100) / 10.0 - 5.0;
  const auto y = m.multiply(x);
  const Eigen::VectorXd ref = oracle::dense(m) * Eigen::Map<const Eigen::VectorXd>(x.data(), 20);
  for (std::size_t j = 0; j < 30; ++j) EXPECT_NEAR(y[j], ref(Eigen::Index(j)), 1e-12);
}
