#pragma once

// Admissible stepsize vectors D for the distributed sampling.
//
//   D1: per-row weights alpha*_j built from omega_j and omega'_j.
//   D2: beta* * ||A_:i||^2, beta* from the spectral quantities sigma, sigma'.
//   D3: the classical cheap bound 2 beta*_1 with sigma <= max_j omega_j.
//   D4: tau/(tau-1) beta*_1 with sigma <= sigma~ = max_i v_i.
//
// For tau >= 2 every coordinate satisfies D1 <= D4 <= D3 and D2 <= D4.
// All per-column sums use compensated accumulation in storage order.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hydra2/error.hpp"
#include "hydra2/numeric.hpp"
#include "hydra2/sparse_matrix.hpp"

namespace hydra2 {

enum class StepsizeRule { D1, D2, D3, D4 };

inline const char* to_string(StepsizeRule r) {
  switch (r) {
    case StepsizeRule::D1: return "D1";
    case StepsizeRule::D2: return "D2";
    case StepsizeRule::D3: return "D3";
    case StepsizeRule::D4: return "D4";
  }
  return "?";
}

inline StepsizeRule parse_rule(const std::string& s) {
  if (s == "D1" || s == "d1") return StepsizeRule::D1;
  if (s == "D2" || s == "d2") return StepsizeRule::D2;
  if (s == "D3" || s == "d3") return StepsizeRule::D3;
  if (s == "D4" || s == "d4") return StepsizeRule::D4;
  throw Error(ErrorCode::FormatError, "unknown stepsize rule '" + s + "'");
}

/// Scalars a stepsize vector was derived from. Unused ones stay empty.
struct StepsizeMeta {
  std::optional<double> beta_star;
  std::optional<double> beta1;
  std::optional<double> sigma;
  std::optional<double> sigma_prime;
  std::optional<double> sigma_tilde;
  std::optional<double> max_omega;
  std::optional<double> factor;  // common multiplier of ||A_:i||^2 (D2-D4)
};

struct StepsizeVector {
  std::vector<double> values;
  StepsizeRule rule = StepsizeRule::D1;
  std::size_t tau = 0;
  std::size_t c = 0;
  std::size_t s = 0;
  StepsizeMeta meta;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
};

inline std::size_t s_one(std::size_t s) { return std::max<std::size_t>(1, s - (s > 0 ? 1 : 0)); }

inline void check_tau_range(std::size_t tau, std::size_t s) {
  if (tau < 1 || tau > s) {
    throw Error(ErrorCode::TauOutOfRange,
                "tau=" + std::to_string(tau) + " must lie in [1, s=" + std::to_string(s) + "]");
  }
}

inline void check_tau_at_least_two(std::size_t tau, StepsizeRule rule) {
  if (tau < 2) {
    throw Error(ErrorCode::TauTooSmall,
                std::string(to_string(rule)) + " is only defined for tau >= 2 (got tau=" +
                    std::to_string(tau) + ")");
  }
}

/// alpha*_j = 1 + (tau-1)(omega_j-1)/s1
///          + (tau/s - (tau-1)/s1) * (omega'_j-1)/omega'_j * omega_j
inline std::vector<double> compute_alpha_star(const RowStats& stats, std::size_t tau,
                                              std::size_t s, std::size_t /*c*/ = 0) {
  check_tau_range(tau, s);
  const double s1 = double(s_one(s));
  const double t = double(tau);
  const double a3 = t / double(s) - (t - 1.0) / s1;
  std::vector<double> alpha(stats.omega.size());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    const double w = double(stats.omega[j]);
    const double wp = double(stats.omega_prime[j]);
    alpha[j] = 1.0 + (t - 1.0) * (w - 1.0) / s1 + a3 * ((wp - 1.0) / wp) * w;
  }
  return alpha;
}

namespace detail {

inline StepsizeVector scaled_col_norms(const RowStats& stats, const SparseMatrix& m, double factor,
                                       StepsizeRule rule, std::size_t tau, std::size_t s) {
  StepsizeVector out;
  out.rule = rule;
  out.tau = tau;
  out.s = s;
  out.c = s == 0 ? 0 : m.cols() / s;
  out.values.resize(m.cols());
  for (std::size_t i = 0; i < m.cols(); ++i) {
    out.values[i] = m.is_padding(i) ? 1.0 : factor * stats.col_sq_norms[i];
  }
  out.meta.factor = factor;
  return out;
}

}  // namespace detail

/// D1_ii = sum_j alpha*_j A_ji^2 over column i's rows. Padding columns get 1.
inline StepsizeVector compute_d1(const SparseMatrix& m, std::span<const double> alpha_star,
                                 std::size_t tau, std::size_t s) {
  StepsizeVector out;
  out.rule = StepsizeRule::D1;
  out.tau = tau;
  out.s = s;
  out.c = m.cols() / s;
  out.values.resize(m.cols());
  for (std::size_t i = 0; i < m.cols(); ++i) {
    if (m.is_padding(i)) {
      out.values[i] = 1.0;
      continue;
    }
    const auto col = m.col(i);
    CompensatedSum acc;
    for (std::size_t k = 0; k < col.size(); ++k) {
      acc.add(alpha_star[col.indices[k]] * col.values[k] * col.values[k]);
    }
    out.values[i] = acc.value();
  }
  return out;
}

struct BetaStar {
  double beta1;
  double beta2;
  double value;
};

inline BetaStar compute_beta_star(double sigma, double sigma_prime, std::size_t tau,
                                  std::size_t s) {
  check_tau_range(tau, s);
  const double s1 = double(s_one(s));
  const double t = double(tau);
  const double beta1 = 1.0 + (t - 1.0) * (sigma - 1.0) / s1;
  const double beta2 = (t / double(s) - (t - 1.0) / s1) * ((sigma_prime - 1.0) / sigma_prime) * sigma;
  return {beta1, beta2, beta1 + beta2};
}

inline StepsizeVector compute_d2(const SparseMatrix& m, const RowStats& stats, double sigma,
                                 double sigma_prime, std::size_t tau, std::size_t s) {
  const auto beta = compute_beta_star(sigma, sigma_prime, tau, s);
  auto out = detail::scaled_col_norms(stats, m, beta.value, StepsizeRule::D2, tau, s);
  out.meta.beta_star = beta.value;
  out.meta.beta1 = beta.beta1;
  out.meta.sigma = sigma;
  out.meta.sigma_prime = sigma_prime;
  return out;
}

inline StepsizeVector compute_d3(const SparseMatrix& m, const RowStats& stats, std::size_t tau,
                                 std::size_t s) {
  check_tau_range(tau, s);
  check_tau_at_least_two(tau, StepsizeRule::D3);
  const double max_omega = double(stats.max_omega());
  const double factor = 2.0 * (1.0 + (double(tau) - 1.0) / double(s_one(s)) * (max_omega - 1.0));
  auto out = detail::scaled_col_norms(stats, m, factor, StepsizeRule::D3, tau, s);
  out.meta.max_omega = max_omega;
  return out;
}

struct SigmaTilde {
  std::vector<double> v;  // v_i; zero on padding columns
  double sigma_tilde;
};

/// v_i = sum_j omega_j A_ji^2 / sum_j A_ji^2 and sigma~ = max_i v_i.
inline SigmaTilde compute_sigma_tilde(const SparseMatrix& m, const RowStats& stats) {
  SigmaTilde out;
  out.v.assign(m.cols(), 0.0);
  out.sigma_tilde = 0.0;
  for (std::size_t i = 0; i < m.data_cols(); ++i) {
    const auto col = m.col(i);
    CompensatedSum num;
    for (std::size_t k = 0; k < col.size(); ++k) {
      num.add(double(stats.omega[col.indices[k]]) * col.values[k] * col.values[k]);
    }
    out.v[i] = num.value() / stats.col_sq_norms[i];
    out.sigma_tilde = std::max(out.sigma_tilde, out.v[i]);
  }
  return out;
}

inline StepsizeVector compute_d4(const SparseMatrix& m, const RowStats& stats, double sigma_tilde,
                                 std::size_t tau, std::size_t s) {
  check_tau_range(tau, s);
  check_tau_at_least_two(tau, StepsizeRule::D4);
  const double t = double(tau);
  const double factor = t / (t - 1.0) * (1.0 + (sigma_tilde - 1.0) * (t - 1.0) / (double(s) - 1.0));
  auto out = detail::scaled_col_norms(stats, m, factor, StepsizeRule::D4, tau, s);
  out.meta.sigma_tilde = sigma_tilde;
  return out;
}

// ---------------------------------------------------------------------------
// sigma and sigma' by power iteration.
//
// sigma  = max x'Mx / x'D^M x and sigma' = max x'Mx / x'B^M x with M = A'A.
// Both equal the top eigenvalue of an n-by-n PSD operator
//
//   sigma : K w = sum_i a_i a_i'w / ||a_i||^2
//   sigma': K w = sum_l P_l w,  P_l the orthogonal projector onto range(A^(l))
//
// where a_i are the columns and A^(l) the column block of node l. Iterating
// with K (rather than a generalized pencil) keeps the Rayleigh quotients
// non-decreasing and tolerates singular diagonal blocks of M. The start
// vector is A 1, i.e. the all-ones coordinate vector mapped to row space.

struct PowerIterationOptions {
  double tol = 1e-6;
  std::size_t max_iter = 0;          // 0 means 10 * d
  std::size_t dense_block_limit = 400;  // blocks wider than this use CGLS
};

struct PowerEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> history;  // Rayleigh quotient per iteration
};

struct SpectralEstimate {
  PowerEstimate sigma;
  PowerEstimate sigma_prime;
};

namespace detail {

/// Applies w -> P_l w for one column block: y = argmin ||A^(l) y - w||,
/// result A^(l) y accumulated into `out`.
class BlockProjector {
 public:
  BlockProjector(const SparseMatrix& m, std::size_t begin, std::size_t end, std::size_t dense_limit)
      : m_(m), begin_(begin), end_(std::min(end, m.data_cols())) {
    if (end_ <= begin_) return;
    const std::size_t width = end_ - begin_;
    if (width <= dense_limit) {
      dense_ = true;
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(width, width);
      for (std::size_t j = 0; j < m.rows(); ++j) {
        const auto r = m.row(j);
        const auto lo = std::lower_bound(r.indices.begin(), r.indices.end(), Index(begin_)) - r.indices.begin();
        const auto hi = std::lower_bound(r.indices.begin(), r.indices.end(), Index(end_)) - r.indices.begin();
        for (auto a = lo; a < hi; ++a) {
          for (auto b = lo; b < hi; ++b) {
            gram(r.indices[a] - begin_, r.indices[b] - begin_) += r.values[a] * r.values[b];
          }
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
      const auto& lambda = eig.eigenvalues();
      const double cutoff = 1e-12 * std::max(lambda.maxCoeff(), 0.0);
      std::vector<Eigen::Index> keep;
      for (Eigen::Index k = 0; k < lambda.size(); ++k) {
        if (lambda(k) > cutoff) keep.push_back(k);
      }
      // pinv(G) = V diag(1/lambda) V' restricted to the numerical range
      basis_.resize(Eigen::Index(width), Eigen::Index(keep.size()));
      inv_.resize(Eigen::Index(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) {
        basis_.col(Eigen::Index(k)) = eig.eigenvectors().col(keep[k]);
        inv_(Eigen::Index(k)) = 1.0 / lambda(keep[k]);
      }
    }
  }

  void apply_add(std::span<const double> w, std::span<double> out) const {
    if (end_ <= begin_) return;
    const std::size_t width = end_ - begin_;
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(width));
    for (std::size_t i = begin_; i < end_; ++i) rhs(Eigen::Index(i - begin_)) = col_dot(i, w);
    Eigen::VectorXd y;
    if (dense_) {
      y = basis_ * (inv_.asDiagonal() * (basis_.transpose() * rhs));
    } else {
      y = cgls(w);
    }
    for (std::size_t i = begin_; i < end_; ++i) {
      const auto c = m_.col(i);
      const double yi = y(Eigen::Index(i - begin_));
      for (std::size_t k = 0; k < c.size(); ++k) out[c.indices[k]] += c.values[k] * yi;
    }
  }

 private:
  double col_dot(std::size_t i, std::span<const double> w) const {
    const auto c = m_.col(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) acc += c.values[k] * w[c.indices[k]];
    return acc;
  }

  // Least squares on the block by CGLS, from zero (min-norm solution).
  Eigen::VectorXd cgls(std::span<const double> w) const {
    const std::size_t width = end_ - begin_;
    const std::size_t n = m_.rows();
    Eigen::VectorXd y = Eigen::VectorXd::Zero(Eigen::Index(width));
    std::vector<double> r(w.begin(), w.end());
    Eigen::VectorXd g(static_cast<Eigen::Index>(width));
    for (std::size_t i = begin_; i < end_; ++i) g(Eigen::Index(i - begin_)) = col_dot(i, r);
    Eigen::VectorXd p = g;
    double gamma = g.squaredNorm();
    const double stop = 1e-26 * std::max(gamma, 1e-300);
    std::vector<double> q(n);
    for (std::size_t it = 0; it < std::min(width, n) + 10 && gamma > stop; ++it) {
      std::fill(q.begin(), q.end(), 0.0);
      for (std::size_t i = begin_; i < end_; ++i) {
        const auto c = m_.col(i);
        const double pi = p(Eigen::Index(i - begin_));
        for (std::size_t k = 0; k < c.size(); ++k) q[c.indices[k]] += c.values[k] * pi;
      }
      double qq = 0.0;
      for (double v : q) qq += v * v;
      if (qq <= 0.0) break;
      const double alpha = gamma / qq;
      y += alpha * p;
      for (std::size_t j = 0; j < n; ++j) r[j] -= alpha * q[j];
      for (std::size_t i = begin_; i < end_; ++i) g(Eigen::Index(i - begin_)) = col_dot(i, r);
      const double gamma_next = g.squaredNorm();
      p = g + (gamma_next / gamma) * p;
      gamma = gamma_next;
    }
    return y;
  }

  const SparseMatrix& m_;
  std::size_t begin_;
  std::size_t end_;
  bool dense_ = false;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd inv_;
};

template <class Apply>
PowerEstimate power_iterate(const SparseMatrix& m, Apply&& apply, const PowerIterationOptions& opt) {
  const std::size_t n = m.rows();
  std::vector<double> ones(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.data_cols(); ++i) ones[i] = 1.0;
  std::vector<double> w = m.multiply(ones);
  double nrm = norm2(w);
  if (nrm == 0.0) {
    std::fill(w.begin(), w.end(), 1.0);
    nrm = std::sqrt(double(n));
  }
  for (auto& v : w) v /= nrm;

  const std::size_t max_iter = opt.max_iter ? opt.max_iter : 10 * m.cols();
  PowerEstimate est;
  std::vector<double> kw(n);
  double prev = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::fill(kw.begin(), kw.end(), 0.0);
    apply(std::span<const double>(w), std::span<double>(kw));
    const double rq = dot(w, kw);
    est.history.push_back(rq);
    est.value = std::max(est.value, rq);
    est.iterations = it + 1;
    if (it > 0 && std::abs(rq - prev) <= opt.tol * std::abs(rq)) {
      est.converged = true;
      break;
    }
    prev = rq;
    const double knorm = norm2(kw);
    if (knorm == 0.0) break;
    for (std::size_t j = 0; j < n; ++j) w[j] = kw[j] / knorm;
  }
  return est;
}

}  // namespace detail

/// Power-iteration estimates of sigma and sigma'. Each Rayleigh quotient is a
/// lower bound on the true value; `converged` is false when max_iter ran out,
/// in which case `value` is the best lower estimate found.
inline SpectralEstimate compute_sigma_power(const SparseMatrix& m, const Partition& p,
                                            PowerIterationOptions opt = {}) {
  if (!(opt.tol > 0.0)) throw Error(ErrorCode::InvalidRange, "power iteration tol must be > 0");
  SpectralEstimate out;

  std::vector<double> inv_norm(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.data_cols(); ++i) {
    CompensatedSum acc;
    for (double v : m.col(i).values) acc.add(v * v);
    inv_norm[i] = 1.0 / acc.value();
  }
  out.sigma = detail::power_iterate(
      m,
      [&](std::span<const double> w, std::span<double> kw) {
        for (std::size_t i = 0; i < m.data_cols(); ++i) {
          const auto c = m.col(i);
          double t = 0.0;
          for (std::size_t k = 0; k < c.size(); ++k) t += c.values[k] * w[c.indices[k]];
          t *= inv_norm[i];
          for (std::size_t k = 0; k < c.size(); ++k) kw[c.indices[k]] += c.values[k] * t;
        }
      },
      opt);

  std::vector<detail::BlockProjector> blocks;
  blocks.reserve(p.c);
  for (std::size_t l = 0; l < p.c; ++l) blocks.emplace_back(m, p.begin(l), p.end(l), opt.dense_block_limit);
  out.sigma_prime = detail::power_iterate(
      m,
      [&](std::span<const double> w, std::span<double> kw) {
        for (const auto& b : blocks) b.apply_add(w, kw);
      },
      opt);
  return out;
}

/// Options for compute_stepsize(). D2 needs sigma and sigma'; if they are not
/// supplied they are estimated by power iteration with `power`.
struct StepsizeOptions {
  std::optional<double> sigma;
  std::optional<double> sigma_prime;
  PowerIterationOptions power;
};

inline StepsizeVector compute_stepsize(StepsizeRule rule, const SparseMatrix& m, const Partition& p,
                                       const RowStats& stats, std::size_t tau,
                                       const StepsizeOptions& opt = {}) {
  switch (rule) {
    case StepsizeRule::D1: {
      const auto alpha = compute_alpha_star(stats, tau, p.s, p.c);
      return compute_d1(m, alpha, tau, p.s);
    }
    case StepsizeRule::D2: {
      check_tau_range(tau, p.s);
      double sigma = 0.0, sigma_prime = 0.0;
      if (opt.sigma && opt.sigma_prime) {
        sigma = *opt.sigma;
        sigma_prime = *opt.sigma_prime;
      } else {
        const auto est = compute_sigma_power(m, p, opt.power);
        sigma = opt.sigma.value_or(est.sigma.value);
        sigma_prime = opt.sigma_prime.value_or(est.sigma_prime.value);
      }
      return compute_d2(m, stats, sigma, sigma_prime, tau, p.s);
    }
    case StepsizeRule::D3:
      return compute_d3(m, stats, tau, p.s);
    case StepsizeRule::D4: {
      check_tau_range(tau, p.s);
      check_tau_at_least_two(tau, StepsizeRule::D4);
      return compute_d4(m, stats, compute_sigma_tilde(m, stats).sigma_tilde, tau, p.s);
    }
  }
  throw Error(ErrorCode::FormatError, "unknown rule");
}

}  // namespace hydra2
