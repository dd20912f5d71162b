#pragma once

// Accelerated distributed coordinate descent (Hydra^2) and its
// non-accelerated special case (Hydra, theta frozen at tau/s).
//
// One iteration, for every node l in parallel and every sampled i in S_l:
//
//   g   = d_i f(theta^2 u + z)            (from residuals r_u = Au, r_z = Az)
//   t   = argmin g t + (s theta D_ii / 2 tau) t^2 + R_i(z_i + t)
//   z_i += t,   u_i -= (1/theta^2 - s/(tau theta)) t
//
// then theta <- (sqrt(theta^4 + 4 theta^2) - theta^2)/2. The iterate is
// x = theta_prev^2 u + z with theta_prev the value used by the last step.
//
// Residual bookkeeping is the part that decides reproducibility: each node
// sums its contributions per row in ascending coordinate order, and node
// deltas are merged into r_u, r_z in ascending node order. The distributed
// harness follows the same rule, so both produce identical bits.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydra2/error.hpp"
#include "hydra2/numeric.hpp"
#include "hydra2/problem.hpp"
#include "hydra2/sampling.hpp"
#include "hydra2/sparse_matrix.hpp"
#include "hydra2/stepsize.hpp"

namespace hydra2 {

enum class Mode { Hydra2, Hydra };

inline const char* to_string(Mode m) { return m == Mode::Hydra2 ? "hydra2" : "hydra"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "hydra2") return Mode::Hydra2;
  if (s == "hydra") return Mode::Hydra;
  throw Error(ErrorCode::FormatError, "unknown mode '" + s + "'");
}

/// Positive root of x^2 + theta^2 x - theta^2 = 0, written in a form free of
/// cancellation for small theta.
inline double theta_next(double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw Error(ErrorCode::ThetaOutOfRange, "theta=" + std::to_string(theta));
  }
  const double t2 = theta * theta;
  return 2.0 * t2 / (t2 + std::sqrt(t2 * t2 + 4.0 * t2));
}

struct SolverState {
  std::vector<double> u;
  std::vector<double> z;
  Residuals res;
  double theta = 1.0;      // theta_k, used by the next step
  double theta_out = 1.0;  // theta of the last completed step (output rule)
  std::uint64_t k = 0;
  Mode mode = Mode::Hydra2;
  std::size_t tau = 1;
  std::size_t s = 1;

  /// theta is still theta_0 = tau/s.
  bool at_theta0() const noexcept { return mode == Mode::Hydra || k == 0; }

  /// 1/theta^2 - s/(tau theta). Exactly zero while theta = theta_0 (Hydra
  /// mode, and the first Hydra^2 step).
  double u_coefficient() const {
    if (at_theta0()) return 0.0;
    const long double th = theta;
    const long double c = (static_cast<long double>(tau) - static_cast<long double>(s) * th) /
                          (static_cast<long double>(tau) * th * th);
    return static_cast<double>(c);
  }
};

/// Scalars fixed for the duration of one iteration.
struct IterationScalars {
  double theta2;      // theta_k^2, where partial derivatives are taken
  double beta_scale;  // s theta_k / tau, multiplies D_ii; exactly 1 at theta_0
  double u_coef;      // 1/theta_k^2 - s/(tau theta_k)
};

inline IterationScalars iteration_scalars(const SolverState& st) {
  return {st.theta * st.theta,
          st.at_theta0() ? 1.0 : double(st.s) * st.theta / double(st.tau),
          st.u_coefficient()};
}

/// x = theta_prev^2 u + z.
inline std::vector<double> reconstruct_x(const SolverState& st) {
  std::vector<double> x(st.z.size());
  const double t2 = st.theta_out * st.theta_out;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = t2 * st.u[i] + st.z[i];
  return x;
}

/// r_x = theta_prev^2 r_u + r_z, i.e. A x without touching the matrix.
inline std::vector<double> reconstruct_residual(const SolverState& st) {
  std::vector<double> r(st.res.r_z.size());
  const double t2 = st.theta_out * st.theta_out;
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = t2 * st.res.r_u[j] + st.res.r_z[j];
  return r;
}

// ---------------------------------------------------------------------------
// Per-node kernel, shared by the single-process solver and the workers.

/// One row entry of a node's residual delta. Also the wire record.
struct DeltaRecord {
  Index row;
  double dz;
  double du;
};

/// Builds sparse per-row deltas for one node in ascending column order.
class NodeDeltaBuilder {
 public:
  explicit NodeDeltaBuilder(std::size_t n_rows) : dz_(n_rows, 0.0), du_(n_rows, 0.0), mark_(n_rows, 0) {}

  void add_column(SparseSlice col, double tz, double tu) {
    for (std::size_t k = 0; k < col.size(); ++k) {
      const auto j = col.indices[k];
      if (!mark_[j]) {
        mark_[j] = 1;
        touched_.push_back(j);
        dz_[j] = 0.0;
        du_[j] = 0.0;
      }
      dz_[j] += col.values[k] * tz;
      du_[j] += col.values[k] * tu;
    }
  }

  void add_entry(Index j, double dz, double du) {
    if (!mark_[j]) {
      mark_[j] = 1;
      touched_.push_back(j);
      dz_[j] = 0.0;
      du_[j] = 0.0;
    }
    dz_[j] += dz;
    du_[j] += du;
  }

  /// Emits one record per touched row, in first-touch order, and resets the
  /// builder. A row appears once per node, so the record order never changes
  /// the residual sums; only the per-row accumulation order matters.
  void finish(std::vector<DeltaRecord>& out) {
    out.clear();
    out.reserve(touched_.size());
    for (auto j : touched_) {
      out.push_back({j, dz_[j], du_[j]});
      mark_[j] = 0;
    }
    touched_.clear();
  }

 private:
  std::vector<double> dz_;
  std::vector<double> du_;
  std::vector<char> mark_;
  std::vector<Index> touched_;
};

/// Slice of z and u owned by a node or worker; coordinate i lives at i - base.
struct CoordView {
  std::span<double> z;
  std::span<double> u;
  std::size_t base = 0;
};

inline constexpr double kDivergenceLimit = 1e100;

/// Steps 7-9 for one node's sampled coordinates. Reads residuals only; writes
/// the owned z/u entries and the node delta.
inline void node_update(const CompositeProblem& prob, std::span<const double> D, const Residuals& res,
                        const IterationScalars& sc, std::span<const Index> coords, CoordView view,
                        NodeDeltaBuilder& builder, std::vector<DeltaRecord>& out) {
  for (auto i : coords) {
    const double g = grad_coord(prob, res, sc.theta2, i);
    const double t = prox_step(prob.reg, g, sc.beta_scale * D[i], view.z[i - view.base]);
    double& zi = view.z[i - view.base];
    double& ui = view.u[i - view.base];
    zi += t;
    const double tu = -sc.u_coef * t;
    ui += tu;
    if (!(std::abs(zi) <= kDivergenceLimit) || !(std::abs(ui) <= kDivergenceLimit)) {
      throw Error(ErrorCode::NonFiniteIterate,
                  "coordinate " + std::to_string(i + 1) + " left the finite range; the stepsizes " +
                      "are probably not admissible",
                  i);
    }
    builder.add_column(prob.A().col(i), t, tu);
  }
  builder.finish(out);
}

/// Adds one node's delta into the residuals. u deltas are skipped when the
/// u-coefficient is zero, which keeps r_u identically zero in Hydra mode.
inline void apply_delta(Residuals& res, std::span<const DeltaRecord> recs, bool with_u) {
  for (const auto& r : recs) {
    res.r_z[r.row] += r.dz;
    if (with_u) res.r_u[r.row] += r.du;
  }
}

/// Node l's share of (A z, A u) as sparse records, ascending columns.
inline void node_products(const SparseMatrix& a, const Partition& p, std::size_t l, CoordView view,
                          NodeDeltaBuilder& builder, std::vector<DeltaRecord>& out) {
  for (auto i = p.begin(l); i < p.end(l); ++i) {
    const double zi = view.z[i - view.base], ui = view.u[i - view.base];
    if (zi == 0.0 && ui == 0.0) continue;
    builder.add_column(a.col(i), zi, ui);
  }
  builder.finish(out);
}

// ---------------------------------------------------------------------------

struct TracePoint {
  std::uint64_t k;
  double seconds;
  double objective;
  double suboptimality;  // NaN when L* is unknown
  double duality_gap;    // NaN unless the problem is an SVM dual
};

struct SolverConfig {
  std::size_t tau = 1;
  std::size_t c = 1;
  StepsizeVector D;
  Mode mode = Mode::Hydra2;
  std::uint64_t max_iter = 1000;
  std::optional<double> epsilon;  // stop once the monitored gap is <= epsilon
  std::optional<double> l_star;
  std::uint64_t monitor_every = 0;     // 0: max(1, floor(s / (c tau)))
  std::uint64_t refresh_every = 10000;  // 0: never recompute residuals
  std::uint64_t seed = 0;
  std::vector<double> z0;  // empty: zeros
  /// Called after every completed iteration (tests and diagnostics).
  std::function<void(const SolverState&, const DistributedSample&)> on_iteration;
};

inline std::uint64_t default_monitor_every(const Partition& p, std::size_t tau) {
  return std::max<std::uint64_t>(1, p.s / (p.c * tau));
}

struct SolveResult {
  std::vector<double> x;
  std::vector<TracePoint> trace;
  SolverState state;
  bool reached_target = false;
};

inline Partition config_partition(const SolverConfig& cfg, const CompositeProblem& prob) {
  const auto p = partition_uniform(prob.cols(), cfg.c);
  check_tau(p, cfg.tau);
  if (cfg.D.size() != prob.cols()) {
    throw Error(ErrorCode::ShardMismatch, "stepsize vector length " + std::to_string(cfg.D.size()) +
                                              " does not match d=" + std::to_string(prob.cols()));
  }
  for (std::size_t i = 0; i < cfg.D.size(); ++i) {
    if (!(cfg.D.values[i] > 0.0)) throw Error(ErrorCode::NonpositiveBeta, "D_ii must be > 0", i);
  }
  if (!cfg.z0.empty() && cfg.z0.size() != prob.cols()) {
    throw Error(ErrorCode::InvalidShape, "z0 has the wrong length");
  }
  return p;
}

inline SolverState initial_state(const SolverConfig& cfg, const CompositeProblem& prob, const Partition& p) {
  SolverState st;
  st.mode = cfg.mode;
  st.tau = cfg.tau;
  st.s = p.s;
  st.theta = double(cfg.tau) / double(p.s);
  st.theta_out = st.theta;
  st.u.assign(prob.cols(), 0.0);
  st.z = cfg.z0.empty() ? std::vector<double>(prob.cols(), 0.0) : cfg.z0;
  st.res.r_u.assign(prob.rows(), 0.0);
  st.res.r_z.assign(prob.rows(), 0.0);
  // Residuals assembled the same way a refresh does it: per-node partials
  // merged in ascending node order.
  NodeDeltaBuilder builder(prob.rows());
  std::vector<DeltaRecord> recs;
  for (std::size_t l = 0; l < p.c; ++l) {
    node_products(prob.A(), p, l, CoordView{st.z, st.u, 0}, builder, recs);
    apply_delta(st.res, recs, true);
  }
  return st;
}

/// Completes an iteration after all deltas are merged.
inline void advance_theta(SolverState& st) {
  st.theta_out = st.theta;
  if (st.mode == Mode::Hydra2) st.theta = theta_next(st.theta);
  ++st.k;
}

inline bool refresh_due(const SolverConfig& cfg, std::uint64_t k) {
  return cfg.refresh_every > 0 && k > 0 && k % cfg.refresh_every == 0;
}

/// Evaluates the monitored quantities at x with r = A x.
inline TracePoint evaluate_point(const CompositeProblem& prob, std::span<const double> x,
                                 std::span<const double> r, std::uint64_t k,
                                 std::optional<double> l_star, double seconds) {
  TracePoint tp{k, seconds, objective_from_residual(prob, r, x),
                std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  if (l_star) tp.suboptimality = tp.objective - *l_star;
  if (prob.svm) tp.duality_gap = svm_duality_gap_from_residual(prob, r, x);
  return tp;
}

inline TracePoint monitor_point(const CompositeProblem& prob, const SolverState& st,
                                std::optional<double> l_star, double seconds) {
  const auto x = reconstruct_x(st);
  const auto r = reconstruct_residual(st);
  return evaluate_point(prob, x, r, st.k, l_star, seconds);
}

inline bool target_reached(const SolverConfig& cfg, const TracePoint& tp) {
  if (!cfg.epsilon) return false;
  if (cfg.l_star) return tp.suboptimality <= *cfg.epsilon;
  if (!std::isnan(tp.duality_gap)) return tp.duality_gap <= *cfg.epsilon;
  return false;
}

/// Single-process run in deterministic order.
inline SolveResult solve(const SolverConfig& cfg, const CompositeProblem& prob) {
  const auto p = config_partition(cfg, prob);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const std::uint64_t monitor = cfg.monitor_every ? cfg.monitor_every : default_monitor_every(p, cfg.tau);

  SolveResult out;
  SolverState& st = out.state;
  st = initial_state(cfg, prob, p);
  DistributedSampler sampler(p, cfg.tau, cfg.seed);
  NodeDeltaBuilder builder(prob.rows());
  std::vector<std::vector<DeltaRecord>> deltas(p.c);
  DistributedSample sample;
  sample.tau = cfg.tau;
  sample.c = p.c;
  sample.coords.resize(p.c * cfg.tau);

  out.trace.push_back(monitor_point(prob, st, cfg.l_star, elapsed()));
  if (target_reached(cfg, out.trace.back())) out.reached_target = true;

  while (!out.reached_target && st.k < cfg.max_iter) {
    sample.iteration = st.k;
    const auto sc = iteration_scalars(st);
    for (std::size_t l = 0; l < p.c; ++l) {
      auto node_coords = std::span<Index>(sample.coords).subspan(l * cfg.tau, cfg.tau);
      sampler.draw_node(l, st.k, node_coords);
      node_update(prob, cfg.D.values, st.res, sc, node_coords, CoordView{st.z, st.u, 0}, builder,
                  deltas[l]);
    }
    for (std::size_t l = 0; l < p.c; ++l) apply_delta(st.res, deltas[l], sc.u_coef != 0.0);
    advance_theta(st);

    if (refresh_due(cfg, st.k)) {
      std::fill(st.res.r_u.begin(), st.res.r_u.end(), 0.0);
      std::fill(st.res.r_z.begin(), st.res.r_z.end(), 0.0);
      for (std::size_t l = 0; l < p.c; ++l) {
        node_products(prob.A(), p, l, CoordView{st.z, st.u, 0}, builder, deltas[l]);
        apply_delta(st.res, deltas[l], true);
      }
    }
    if (cfg.on_iteration) cfg.on_iteration(st, sample);
    if (st.k % monitor == 0 || st.k == cfg.max_iter) {
      out.trace.push_back(monitor_point(prob, st, cfg.l_star, elapsed()));
      if (target_reached(cfg, out.trace.back())) out.reached_target = true;
    }
  }
  if (out.trace.back().k != st.k) out.trace.push_back(monitor_point(prob, st, cfg.l_star, elapsed()));
  out.x = reconstruct_x(st);
  return out;
}

// ---------------------------------------------------------------------------

struct IterationBound {
  double C1;
  double C2;
  double rho;
  double epsilon;
  std::uint64_t k_min;
};

/// Smallest k with k >= (2s/tau)(sqrt((C1+C2)/(rho eps)) - 1) + 1, at least 1.
inline IterationBound iteration_bound(double C1, double C2, double rho, double eps, std::size_t tau,
                                      std::size_t s) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorCode::InvalidRange, "rho must lie in (0,1)");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidRange, "epsilon must be > 0");
  if (!(C1 >= 0.0 && C2 >= 0.0)) throw Error(ErrorCode::InvalidRange, "C1 and C2 must be >= 0");
  if (tau < 1 || tau > s) throw Error(ErrorCode::InvalidRange, "need 1 <= tau <= s");
  const double rhs = 2.0 * double(s) / double(tau) * (std::sqrt((C1 + C2) / (rho * eps)) - 1.0) + 1.0;
  const double k = std::max(1.0, std::ceil(rhs));
  return {C1, C2, rho, eps, static_cast<std::uint64_t>(k)};
}

/// C1 = (1 - tau/s) L0 and C2 = d0' D d0 / 2 with d0 = x0 - x*.
inline IterationBound iteration_bound_for(double L0, std::span<const double> x0,
                                          std::span<const double> x_star, std::span<const double> D,
                                          double rho, double eps, std::size_t tau, std::size_t s) {
  CompensatedSum c2;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double d0 = x0[i] - x_star[i];
    c2.add(0.5 * D[i] * d0 * d0);
  }
  return iteration_bound((1.0 - double(tau) / double(s)) * L0, c2.value(), rho, eps, tau, s);
}

}  // namespace hydra2
