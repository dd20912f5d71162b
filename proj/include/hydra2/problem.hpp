#pragma once

// Composite objectives L(x) = f(x) + sum_i R_i(x_i) with
//
//   f(x) = sum_j phi_j((A x)_j) + q'x,   phi_j(w) = (w - b_j)^2 / 2
//
// so that f(x+h) <= f(x) + f'(x)'h + h'A'Ah/2 holds with the stored A.
//
// LASSO:    phi_j(w) = (w - b_j)^2/2, q = 0, R = lambda |.|.
// SVM dual: the data matrix has one row per feature and one column per
//           example. It is stored pre-scaled as A~ = A diag(y) / (d sqrt(lambda))
//           so f(x) = ||A~ x||^2/2 - (1/d) sum_i x_i, and R is the indicator
//           of [0,1]^d. The duality gap uses the hinge-loss primal
//
//             P(w) = (1/d) sum_i max(0, 1 - y_i w'a_i) + (lambda/2) ||w||^2
//
//           at w(x) = (1/(lambda d)) sum_i x_i y_i a_i = (A~ x)/sqrt(lambda).
//           In scaled terms y_i w'a_i = d (A~_:i)'(A~ x) and
//           (lambda/2)||w||^2 = ||A~ x||^2 / 2.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydra2/error.hpp"
#include "hydra2/numeric.hpp"
#include "hydra2/sparse_matrix.hpp"

namespace hydra2 {

enum class LossKind { SquareMinusB, ScaledSquare };
enum class RegKind { Zero, L1, Box01 };
enum class ProblemKind { Lasso, SvmDual, LeastSquares };

inline const char* to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::Lasso: return "lasso";
    case ProblemKind::SvmDual: return "svm_dual";
    case ProblemKind::LeastSquares: return "least_squares";
  }
  return "?";
}

inline ProblemKind parse_problem_kind(const std::string& s) {
  if (s == "lasso") return ProblemKind::Lasso;
  if (s == "svm_dual" || s == "svm") return ProblemKind::SvmDual;
  if (s == "least_squares") return ProblemKind::LeastSquares;
  throw Error(ErrorCode::FormatError, "unknown problem kind '" + s + "'");
}

struct Regularizer {
  RegKind kind = RegKind::Zero;
  double lambda = 0.0;

  static Regularizer zero() { return {RegKind::Zero, 0.0}; }
  static Regularizer l1(double lambda) { return {RegKind::L1, lambda}; }
  static Regularizer box01() { return {RegKind::Box01, 0.0}; }

  double value(double xi) const noexcept {
    switch (kind) {
      case RegKind::Zero: return 0.0;
      case RegKind::L1: return lambda * std::abs(xi);
      case RegKind::Box01:
        return (xi >= 0.0 && xi <= 1.0) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }
};

inline double soft_threshold(double v, double k) noexcept {
  if (v > k) return v - k;
  if (v < -k) return v + k;
  return 0.0;
}

/// t = argmin_t g t + (beta/2) t^2 + R_i(z_i + t).
inline double prox_step(const Regularizer& reg, double g, double beta, double zi) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::NonpositiveBeta, "beta=" + std::to_string(beta));
  }
  const double target = zi - g / beta;
  switch (reg.kind) {
    case RegKind::Zero: return -g / beta;
    case RegKind::L1: return soft_threshold(target, reg.lambda / beta) - zi;
    case RegKind::Box01: return std::clamp(target, 0.0, 1.0) - zi;
  }
  return 0.0;
}

struct SvmInfo {
  double lambda;
  std::size_t examples;
};

struct CompositeProblem {
  ProblemKind kind = ProblemKind::LeastSquares;
  std::shared_ptr<const SparseMatrix> matrix;
  LossKind loss = LossKind::SquareMinusB;
  std::vector<double> b;  // per row; empty for ScaledSquare
  std::vector<double> q;  // per coordinate; empty means zero
  Regularizer reg;
  std::optional<SvmInfo> svm;

  const SparseMatrix& A() const { return *matrix; }
  std::size_t rows() const { return matrix->rows(); }
  std::size_t cols() const { return matrix->cols(); }

  double phi(std::size_t j, double w) const noexcept {
    const double e = loss == LossKind::SquareMinusB ? w - b[j] : w;
    return 0.5 * e * e;
  }
  double phi_prime(std::size_t j, double w) const noexcept {
    return loss == LossKind::SquareMinusB ? w - b[j] : w;
  }
  double linear(std::size_t i) const noexcept { return q.empty() ? 0.0 : q[i]; }
};

inline CompositeProblem make_least_squares(std::shared_ptr<const SparseMatrix> a, std::vector<double> b,
                                           Regularizer reg = Regularizer::zero()) {
  if (b.size() != a->rows()) throw Error(ErrorCode::InvalidShape, "b must have one entry per row");
  CompositeProblem p;
  p.kind = reg.kind == RegKind::L1 ? ProblemKind::Lasso : ProblemKind::LeastSquares;
  p.matrix = std::move(a);
  p.loss = LossKind::SquareMinusB;
  p.b = std::move(b);
  p.reg = reg;
  return p;
}

/// L(x) = ||Ax - b||^2/2 + lambda ||x||_1.
inline CompositeProblem make_lasso(std::shared_ptr<const SparseMatrix> a, std::vector<double> b,
                                   double lambda) {
  if (lambda < 0.0) throw Error(ErrorCode::InvalidRange, "lambda must be >= 0");
  return make_least_squares(std::move(a), std::move(b), Regularizer::l1(lambda));
}

/// `features` is features-by-examples (one column per example, possibly with
/// trailing padding columns); `labels` holds one +-1 label per data column.
inline CompositeProblem make_svm_dual(const SparseMatrix& features, std::span<const double> labels,
                                      double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::InvalidRange, "lambda must be > 0");
  if (labels.size() != features.data_cols()) {
    throw Error(ErrorCode::InvalidShape, "need one label per example column");
  }
  const std::size_t d = features.data_cols();
  std::vector<double> scale(features.cols(), 0.0);
  for (std::size_t i = 0; i < d; ++i) scale[i] = labels[i] / (double(d) * std::sqrt(lambda));
  CompositeProblem p;
  p.kind = ProblemKind::SvmDual;
  p.matrix = std::make_shared<SparseMatrix>(features.scale_columns(scale));
  p.loss = LossKind::ScaledSquare;
  p.q.assign(features.cols(), 0.0);
  for (std::size_t i = 0; i < d; ++i) p.q[i] = -1.0 / double(d);
  p.reg = Regularizer::box01();
  p.svm = SvmInfo{lambda, d};
  return p;
}

/// Stored products r_u = A u and r_z = A z.
struct Residuals {
  std::vector<double> r_u;
  std::vector<double> r_z;
};

/// Partial derivative i of f at theta^2 u + z, read from the residuals.
/// Cost is the number of nonzeros in column i.
inline double grad_coord(const CompositeProblem& prob, const Residuals& res, double theta2,
                         std::size_t i) {
  const auto col = prob.A().col(i);
  double g = 0.0;
  for (std::size_t k = 0; k < col.size(); ++k) {
    const auto j = col.indices[k];
    g += col.values[k] * prob.phi_prime(j, theta2 * res.r_u[j] + res.r_z[j]);
  }
  return g + prob.linear(i);
}

/// Full gradient at x by direct evaluation (r = A x).
inline std::vector<double> gradient(const CompositeProblem& prob, std::span<const double> x) {
  const auto r = prob.A().multiply(x);
  std::vector<double> g(prob.cols());
  for (std::size_t i = 0; i < prob.cols(); ++i) {
    const auto col = prob.A().col(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < col.size(); ++k) {
      acc += col.values[k] * prob.phi_prime(col.indices[k], r[col.indices[k]]);
    }
    g[i] = acc + prob.linear(i);
  }
  return g;
}

/// f(x) given r = A x.
inline double smooth_value(const CompositeProblem& prob, std::span<const double> r,
                           std::span<const double> x) {
  CompensatedSum acc;
  for (std::size_t j = 0; j < r.size(); ++j) acc.add(prob.phi(j, r[j]));
  if (!prob.q.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) acc.add(prob.q[i] * x[i]);
  }
  return acc.value();
}

inline double regularizer_value(const CompositeProblem& prob, std::span<const double> x) {
  CompensatedSum acc;
  for (double xi : x) {
    const double v = prob.reg.value(xi);
    if (std::isinf(v)) return v;
    acc.add(v);
  }
  return acc.value();
}

/// L(x) from a precomputed r = A x; costs O(n + d).
inline double objective_from_residual(const CompositeProblem& prob, std::span<const double> r,
                                      std::span<const double> x) {
  const double reg = regularizer_value(prob, x);
  if (std::isinf(reg)) return reg;
  return smooth_value(prob, r, x) + reg;
}

inline double objective(const CompositeProblem& prob, std::span<const double> x) {
  const auto r = prob.A().multiply(x);
  return objective_from_residual(prob, r, x);
}

inline double suboptimality(const CompositeProblem& prob, std::span<const double> x, double l_star) {
  return objective(prob, x) - l_star;
}

/// P(w(x)) + L(x) for the SVM dual, from r = A~ x.
inline double svm_duality_gap_from_residual(const CompositeProblem& prob, std::span<const double> r,
                                            std::span<const double> x) {
  if (!prob.svm) throw Error(ErrorCode::InvalidShape, "duality gap needs an svm_dual problem");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) {
      throw Error(ErrorCode::InfeasibleDualPoint,
                  "x_" + std::to_string(i + 1) + "=" + std::to_string(x[i]) + " outside [0,1]", i);
    }
  }
  const double d = double(prob.svm->examples);
  CompensatedSum hinge;
  const auto& a = prob.A();
  for (std::size_t i = 0; i < a.data_cols(); ++i) {
    const auto col = a.col(i);
    double margin = 0.0;
    for (std::size_t k = 0; k < col.size(); ++k) margin += col.values[k] * r[col.indices[k]];
    hinge.add(std::max(0.0, 1.0 - d * margin));
  }
  CompensatedSum half_sq;
  for (double v : r) half_sq.add(0.5 * v * v);
  const double primal = hinge.value() / d + half_sq.value();
  return primal + objective_from_residual(prob, r, x);
}

inline double svm_duality_gap(const CompositeProblem& prob, std::span<const double> x) {
  const auto r = prob.A().multiply(x);
  return svm_duality_gap_from_residual(prob, r, x);
}

}  // namespace hydra2
