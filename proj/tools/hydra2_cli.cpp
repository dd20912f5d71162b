// hydra2: generate, ingest, compute stepsizes, solve, compare and bound.
//
// Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 runtime
// (transport/desync) failure, 1 anything else (I/O, unexpected).

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>

#include "CLI11.hpp"
#include "hydra2/hydra2.hpp"

using namespace hydra2;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
// Bump whenever generate_block_angular's output for a given seed changes.
constexpr int kGeneratorVersion = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
}

json manifest_base(const std::string& command, int argc, char** argv) {
  json args = json::array();
  for (int k = 1; k < argc; ++k) args.push_back(argv[k]);
  return {{"tool", "hydra2"}, {"version", kVersion}, {"generator_version", kGeneratorVersion}, {"command", command},
          {"argv", args}};
}

// Seed handling: an absent --seed draws one from entropy and prints it so the
// run can be repeated.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (std::uint64_t(rd()) << 32) ^ rd();
  std::cerr << "seed: " << s << '\n';
  return s;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * double(v.size() - 1);
  const auto lo = std::size_t(pos);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

json summarize(const StepsizeVector& D, std::size_t data_cols) {
  std::vector<double> v(D.values.begin(), D.values.begin() + std::ptrdiff_t(data_cols));
  std::sort(v.begin(), v.end());
  return {{"min", v.front()}, {"median", quantile_sorted(v, 0.5)}, {"max", v.back()}};
}

// ---------------------------------------------------------------------------
// Problem assembly shared by solve and compare.

struct ProblemArgs {
  std::string data;
  std::string problem = "lasso";
  std::optional<double> lambda;
  double lambda_ratio = 0.1;
  std::size_t c = 0;
};

struct Assembled {
  CompositeProblem prob;
  Partition part;
  double lambda = 0.0;
};

Assembled assemble(const ProblemArgs& a) {
  auto ds = load_dataset(a.data);
  const auto kind = parse_problem_kind(a.problem);
  const std::size_t c = a.c ? a.c : (ds.c_hint ? ds.c_hint : 1);
  Assembled out;
  auto mat = std::make_shared<SparseMatrix>(std::move(ds.A));
  if (kind == ProblemKind::SvmDual) {
    out.lambda = a.lambda.value_or(a.lambda_ratio);
    if (ds.targets.size() != mat->data_cols()) {
      throw Error(ErrorCode::InvalidShape, "svm needs one label per example column (ingest with --layout columns)");
    }
    out.prob = make_svm_dual(*mat, ds.targets, out.lambda);
  } else {
    if (ds.targets.size() != mat->rows()) throw Error(ErrorCode::InvalidShape, "need one target per row");
    if (kind == ProblemKind::Lasso) {
      if (a.lambda) {
        out.lambda = *a.lambda;
      } else {
        // lambda_max = ||A'b||_inf; any lambda >= lambda_max has x* = 0.
        double lmax = 0.0;
        for (std::size_t i = 0; i < mat->data_cols(); ++i) {
          const auto col = mat->col(i);
          double acc = 0.0;
          for (std::size_t k = 0; k < col.size(); ++k) acc += col.values[k] * ds.targets[col.indices[k]];
          lmax = std::max(lmax, std::abs(acc));
        }
        out.lambda = a.lambda_ratio * lmax;
      }
      out.prob = make_lasso(mat, ds.targets, out.lambda);
    } else {
      out.prob = make_least_squares(mat, ds.targets);
    }
  }
  out.part = partition_uniform(out.prob.cols(), c);
  return out;
}

json problem_json(const ProblemArgs& a, const Assembled& as) {
  const bool svm = as.prob.kind == ProblemKind::SvmDual;
  return {{"data_path", a.data},
          {"kind", to_string(as.prob.kind)},
          {"lambda", as.lambda},
          {"scaling_applied", svm ? "column i scaled by y_i / (d sqrt(lambda))" : "none"},
          {"c", as.part.c},
          {"s", as.part.s},
          {"rows", as.prob.rows()},
          {"cols", as.prob.cols()},
          {"padding_cols", as.prob.A().padding_cols()}};
}

struct RunArgs {
  std::string rule = "D1";
  std::string stepsize_file;
  std::size_t tau = 1;
  std::string mode = "hydra2";
  std::optional<double> eps;
  std::optional<double> l_star;
  std::uint64_t max_iter = 1000;
  std::uint64_t monitor_every = 0;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string transport = "inproc";
  std::string reduction = "deterministic";
  std::uint64_t checksum_every = 0;
};

StepsizeVector obtain_stepsize(const RunArgs& r, const Assembled& as) {
  if (!r.stepsize_file.empty()) {
    auto D = load_stepsize(r.stepsize_file);
    if (D.size() != as.prob.cols()) throw Error(ErrorCode::InvalidShape, "stepsize file length does not match d");
    if (D.tau != r.tau || D.c != as.part.c) {
      throw Error(ErrorCode::InvalidShape, "stepsize file was computed for tau=" + std::to_string(D.tau) +
                                               ", c=" + std::to_string(D.c));
    }
    return D;
  }
  const auto st = row_stats(as.prob.A(), as.part);
  return compute_stepsize(parse_rule(r.rule), as.prob.A(), as.part, st, r.tau);
}

SolverConfig make_config(const RunArgs& r, const Assembled& as, StepsizeVector D, Mode mode, std::uint64_t seed) {
  SolverConfig cfg;
  cfg.tau = r.tau;
  cfg.c = as.part.c;
  cfg.D = std::move(D);
  cfg.mode = mode;
  cfg.max_iter = r.max_iter;
  cfg.epsilon = r.eps;
  cfg.l_star = r.l_star;
  cfg.monitor_every = r.monitor_every;
  cfg.seed = seed;
  return cfg;
}

// Runs the TCP group by forking workers-1 children on loopback.
DistributedResult run_tcp(const SolverConfig& cfg, const CompositeProblem& prob, const DistributedOptions& opt) {
  TcpListener listener;
  std::vector<pid_t> kids;
  for (std::size_t rank = 1; rank < opt.workers; ++rank) {
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorCode::TransportFailure, "fork failed");
    if (pid == 0) {
      int rc = 0;
      try {
        auto tr = TcpTransport::connect(listener.port(), rank, opt.workers);
        run_worker(cfg, prob, *tr, opt);
      } catch (const std::exception& e) {
        std::cerr << "worker " << rank << ": " << e.what() << '\n';
        rc = 4;
      }
      std::fflush(nullptr);
      ::_exit(rc);
    }
    kids.push_back(pid);
  }
  DistributedResult res;
  std::optional<Error> failure;
  try {
    auto tr = TcpTransport::accept_group(listener, opt.workers);
    WorkerStats stats;
    auto r = run_worker(cfg, prob, *tr, opt, &stats);
    res.x = std::move(r.x);
    res.trace = std::move(r.trace);
    res.reached_target = r.reached_target;
    res.iterations = r.iterations;
    res.stats.push_back(stats);
  } catch (const Error& e) {
    failure = e;
  }
  bool child_failed = false;
  for (auto pid : kids) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    child_failed = child_failed || !WIFEXITED(status) || WEXITSTATUS(status) != 0;
  }
  if (failure) throw *failure;
  if (child_failed) throw Error(ErrorCode::TransportFailure, "a worker process exited abnormally");
  return res;
}

struct RunOutput {
  std::vector<double> x;
  std::vector<TracePoint> trace;
  bool reached_target = false;
  std::uint64_t iterations = 0;
  double seconds = 0.0;
};

RunOutput run(const RunArgs& r, const SolverConfig& cfg, const CompositeProblem& prob) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  if (r.workers <= 1 && r.transport == "inproc" && r.reduction == "deterministic") {
    auto res = solve(cfg, prob);
    out.x = std::move(res.x);
    out.trace = std::move(res.trace);
    out.reached_target = res.reached_target;
    out.iterations = res.state.k;
  } else {
    DistributedOptions opt;
    opt.workers = std::max<std::size_t>(1, r.workers);
    opt.reduction = r.reduction == "fast" ? ReductionMode::Fast : ReductionMode::Deterministic;
    opt.checksum_every = r.checksum_every;
    auto res = r.transport == "tcp" ? run_tcp(cfg, prob, opt) : run_distributed(cfg, prob, opt);
    out.x = std::move(res.x);
    out.trace = std::move(res.trace);
    out.reached_target = res.reached_target;
    out.iterations = res.iterations;
  }
  out.seconds = seconds_since(t0);
  return out;
}

void add_problem_options(CLI::App* cmd, ProblemArgs& p) {
  cmd->add_option("--data", p.data, "dataset file written by gen or ingest")->required();
  cmd->add_option("--problem", p.problem, "lasso | svm | least_squares")
      ->check(CLI::IsMember({"lasso", "svm", "least_squares"}));
  cmd->add_option("--lambda", p.lambda, "regularization weight (absolute)");
  cmd->add_option("--lambda-ratio", p.lambda_ratio,
                  "lasso: lambda as a fraction of ||A'b||_inf; svm: lambda itself when --lambda is absent");
  cmd->add_option("--c", p.c, "number of nodes (default: the dataset's hint, else 1)");
}

void add_run_options(CLI::App* cmd, RunArgs& r, bool with_mode) {
  cmd->add_option("--rule", r.rule, "stepsize rule D1..D4")->check(CLI::IsMember({"D1", "D2", "D3", "D4"}));
  cmd->add_option("--stepsize", r.stepsize_file, "precomputed stepsize file (overrides --rule)");
  cmd->add_option("--tau", r.tau, "coordinates per node per iteration")->required();
  if (with_mode) cmd->add_option("--mode", r.mode, "hydra2 | hydra")->check(CLI::IsMember({"hydra2", "hydra"}));
  cmd->add_option("--eps", r.eps, "stop when suboptimality (or svm duality gap) <= eps");
  cmd->add_option("--l-star", r.l_star, "known optimal value; enables the suboptimality column");
  cmd->add_option("--max-iter", r.max_iter, "iteration budget");
  cmd->add_option("--monitor-every", r.monitor_every, "trace cadence (default max(1, s/(c tau)))");
  cmd->add_option("--seed", r.seed, "master seed (drawn from entropy and printed when absent)");
  cmd->add_option("--workers", r.workers, "worker count; must divide c");
  cmd->add_option("--transport", r.transport, "inproc | tcp")->check(CLI::IsMember({"inproc", "tcp"}));
  cmd->add_option("--reduction", r.reduction, "deterministic | fast")
      ->check(CLI::IsMember({"deterministic", "fast"}));
  cmd->add_option("--checksum-every", r.checksum_every, "replica checksum cadence (0: off)");
}

json run_args_json(const RunArgs& r, std::uint64_t seed) {
  json j{{"rule", r.rule},        {"tau", r.tau},           {"mode", r.mode},           {"max_iter", r.max_iter},
         {"seed", seed},          {"workers", r.workers},   {"transport", r.transport}, {"reduction", r.reduction},
         {"monitor_every", r.monitor_every}, {"checksum_every", r.checksum_every}};
  if (!r.stepsize_file.empty()) j["stepsize_file"] = r.stepsize_file;
  if (r.eps) j["eps"] = *r.eps;
  if (r.l_star) j["l_star"] = *r.l_star;
  return j;
}

json json_num(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accelerated distributed randomized coordinate descent (Hydra^2)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // gen
  GenOptions gen;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  auto* c_gen = app.add_subcommand("gen", "generate a block-angular lasso instance");
  c_gen->add_option("--rows", gen.rows)->required();
  c_gen->add_option("--cols", gen.cols)->required();
  c_gen->add_option("--c", gen.c)->required();
  c_gen->add_option("--avg-nnz", gen.avg_nnz_per_row, "target average nonzeros per row")->required();
  c_gen->add_option("--max-nnz", gen.max_nnz_per_row, "maximum nonzeros per row")->required();
  c_gen->add_option("--seed", gen_seed);
  c_gen->add_option("--out", gen_out, "output prefix: writes PREFIX.bin and PREFIX.json")->required();

  // ingest
  std::string ing_in, ing_out, ing_layout = "rows";
  IngestOptions ing;
  auto* c_ing = app.add_subcommand("ingest", "convert an svmlight file to the binary format");
  c_ing->add_option("--input", ing_in)->required()->check(CLI::ExistingFile);
  c_ing->add_option("--out", ing_out, "output prefix")->required();
  c_ing->add_option("--layout", ing_layout, "rows: examples are rows (lasso); columns: examples are columns (svm)")
      ->check(CLI::IsMember({"rows", "columns"}));
  c_ing->add_flag("--normalize", ing.normalize_columns, "scale every column to unit norm");
  c_ing->add_option("--pad-to", ing.pad_to_multiple_of, "append zero columns up to a multiple of this");

  // stepsizes
  std::string st_data, st_dir = ".", st_format = "json";
  std::size_t st_tau = 1, st_c = 0;
  std::vector<std::string> st_rules{"D1"};
  PowerIterationOptions st_power;
  auto* c_st = app.add_subcommand("stepsizes", "compute stepsize vectors and a report");
  c_st->add_option("--data", st_data)->required();
  c_st->add_option("--tau", st_tau)->required();
  c_st->add_option("--c", st_c, "number of nodes (default: dataset hint, else 1)");
  c_st->add_option("--rules", st_rules, "any of D1 D2 D3 D4")->delimiter(',')->check(CLI::IsMember({"D1", "D2", "D3", "D4"}));
  c_st->add_option("--out-dir", st_dir);
  c_st->add_option("--format", st_format, "json | bin")->check(CLI::IsMember({"json", "bin"}));
  c_st->add_option("--power-tol", st_power.tol, "power iteration tolerance (D2)");
  c_st->add_option("--power-max-iter", st_power.max_iter, "power iteration cap (0: 10 d)");

  // solve / compare
  ProblemArgs sv_prob, cmp_prob;
  RunArgs sv_run, cmp_run;
  std::string sv_trace = "trace.csv", sv_manifest = "solve.json", sv_solution;
  auto* c_solve = app.add_subcommand("solve", "run hydra2 or hydra and write a trace");
  add_problem_options(c_solve, sv_prob);
  add_run_options(c_solve, sv_run, true);
  c_solve->add_option("--trace", sv_trace, "CSV trace path");
  c_solve->add_option("--manifest", sv_manifest, "JSON manifest path");
  c_solve->add_option("--solution", sv_solution, "write x (data columns only), one value per line");

  std::string cmp_trace = "compare.csv", cmp_manifest = "compare.json";
  auto* c_cmp = app.add_subcommand("compare", "paired hydra2/hydra runs with one merged CSV");
  add_problem_options(c_cmp, cmp_prob);
  add_run_options(c_cmp, cmp_run, false);
  c_cmp->add_option("--trace", cmp_trace);
  c_cmp->add_option("--manifest", cmp_manifest);

  // bound
  double b_c1 = 0, b_c2 = 0, b_rho = 0, b_eps = 0;
  std::size_t b_tau = 1, b_s = 1;
  auto* c_bound = app.add_subcommand("bound", "smallest k guaranteeing P(L(x_k) - L* <= eps) >= 1 - rho");
  c_bound->add_option("--C1", b_c1)->required();
  c_bound->add_option("--C2", b_c2)->required();
  c_bound->add_option("--rho", b_rho)->required();
  c_bound->add_option("--eps", b_eps)->required();
  c_bound->add_option("--tau", b_tau)->required();
  c_bound->add_option("--s", b_s)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_gen) {
      gen.seed = resolve_seed(gen_seed);
      const auto t0 = std::chrono::steady_clock::now();
      const auto g = generate_block_angular(gen);
      save_dataset(gen_out + ".bin", g.data);
      auto m = manifest_base("gen", argc, argv);
      m["params"] = {{"rows", gen.rows}, {"cols", gen.cols}, {"c", gen.c}, {"avg_nnz_per_row", gen.avg_nnz_per_row},
                     {"max_nnz_per_row", gen.max_nnz_per_row}, {"seed", gen.seed},
                     {"global_row_fraction", gen.global_row_fraction}};
      m["stats"] = {{"local_rows", g.stats.local_rows}, {"global_rows", g.stats.global_rows}, {"nnz", g.stats.nnz},
                    {"avg_nnz_per_row", g.stats.avg_nnz_per_row}, {"max_nnz_per_row", g.stats.max_nnz_per_row}};
      // The large-scale experiment this generator imitates; recorded, not generated.
      m["reference_scale"] = {{"cols", 50'000'000'000.0}, {"avg_nnz_per_row", 60000}, {"max_nnz_per_row", 1993419}};
      m["outputs"] = {gen_out + ".bin"};
      m["seconds"] = seconds_since(t0);
      write_json(gen_out + ".json", m);
      std::cout << m["stats"].dump() << '\n';
      return 0;
    }

    if (*c_ing) {
      ing.layout = ing_layout == "columns" ? Layout::ExamplesAsColumns : Layout::ExamplesAsRows;
      std::ifstream is(ing_in);
      const auto raw = parse_svmlight(is);
      const auto ds = to_dataset(raw, ing);
      save_dataset(ing_out + ".bin", ds);
      auto m = manifest_base("ingest", argc, argv);
      m["params"] = {{"input", ing_in}, {"layout", ing_layout}, {"normalize", ing.normalize_columns},
                     {"pad_to", ing.pad_to_multiple_of}};
      m["stats"] = {{"rows", ds.A.rows()}, {"cols", ds.A.cols()}, {"padding_cols", ds.A.padding_cols()},
                    {"nnz", ds.A.nnz()}, {"examples", raw.labels.size()}, {"features", raw.n_features}};
      m["outputs"] = {ing_out + ".bin"};
      write_json(ing_out + ".json", m);
      std::cout << m["stats"].dump() << '\n';
      return 0;
    }

    if (*c_st) {
      const auto ds = load_dataset(st_data);
      const std::size_t c = st_c ? st_c : (ds.c_hint ? ds.c_hint : 1);
      const auto p = partition_uniform(ds.A.cols(), c);
      // Validate every rule before computing any, so nothing is half-written.
      for (const auto& name : st_rules) {
        const auto rule = parse_rule(name);
        check_tau_range(st_tau, p.s);
        if ((rule == StepsizeRule::D3 || rule == StepsizeRule::D4) && st_tau < 2) {
          throw Error(ErrorCode::TauTooSmall, name + " needs tau >= 2: its bound uses (tau-1) in a way that is "
                                                     "only valid for at least two coordinates per node; use D1 or D2");
        }
      }
      const auto t_stats = std::chrono::steady_clock::now();
      const auto st = row_stats(ds.A, p);
      auto m = manifest_base("stepsizes", argc, argv);
      m["params"] = {{"data", st_data}, {"tau", st_tau}, {"c", c}, {"s", p.s}};
      m["row_stats_seconds"] = seconds_since(t_stats);
      json report = json::array();
      for (const auto& name : st_rules) {
        const auto t0 = std::chrono::steady_clock::now();
        StepsizeOptions opt;
        opt.power = st_power;
        const auto D = compute_stepsize(parse_rule(name), ds.A, p, st, st_tau, opt);
        const double secs = seconds_since(t0);
        const std::string path = st_dir + "/" + name + (st_format == "json" ? ".json" : ".bin");
        save_stepsize(path, D);
        auto entry = summarize(D, ds.A.data_cols());
        entry["rule"] = name;
        entry["seconds"] = secs;
        entry["file"] = path;
        entry["meta"] = meta_to_json(D.meta);
        report.push_back(entry);
        std::printf("%s  min %.6g  median %.6g  max %.6g  (%.3fs)\n", name.c_str(), entry["min"].get<double>(),
                    entry["median"].get<double>(), entry["max"].get<double>(), secs);
      }
      m["report"] = report;
      write_json(st_dir + "/stepsizes.json", m);
      return 0;
    }

    if (*c_solve) {
      const auto as = assemble(sv_prob);
      const auto seed = resolve_seed(sv_run.seed);
      auto cfg = make_config(sv_run, as, obtain_stepsize(sv_run, as), parse_mode(sv_run.mode), seed);
      const auto out = run(sv_run, cfg, as.prob);
      {
        std::ofstream os(sv_trace);
        if (!os) throw std::runtime_error("cannot open " + sv_trace);
        write_trace_csv(os, out.trace);
      }
      if (!sv_solution.empty()) {
        std::ofstream os(sv_solution);
        os << std::setprecision(17);
        for (std::size_t i = 0; i < as.prob.A().data_cols(); ++i) os << out.x[i] << '\n';
      }
      auto m = manifest_base("solve", argc, argv);
      m["problem"] = problem_json(sv_prob, as);
      m["run"] = run_args_json(sv_run, seed);
      m["stepsize"] = {{"rule", to_string(cfg.D.rule)}, {"meta", meta_to_json(cfg.D.meta)}};
      const auto& last = out.trace.back();
      m["result"] = {{"iterations", out.iterations}, {"seconds", out.seconds}, {"reached_target", out.reached_target},
                     {"objective", last.objective}, {"suboptimality", json_num(last.suboptimality)},
                     {"duality_gap", json_num(last.duality_gap)}};
      m["outputs"] = {sv_trace};
      if (!sv_solution.empty()) m["outputs"].push_back(sv_solution);
      write_json(sv_manifest, m);
      std::cout << m["result"].dump() << '\n';
      return 0;
    }

    if (*c_cmp) {
      const auto as = assemble(cmp_prob);
      const auto seed = resolve_seed(cmp_run.seed);
      const auto D = obtain_stepsize(cmp_run, as);
      std::map<std::uint64_t, std::array<const TracePoint*, 2>> rows;
      RunOutput outs[2];
      const Mode modes[2] = {Mode::Hydra2, Mode::Hydra};
      json results = json::object();
      for (int m = 0; m < 2; ++m) {
        outs[m] = run(cmp_run, make_config(cmp_run, as, D, modes[m], seed), as.prob);
        results[to_string(modes[m])] = {{"iterations", outs[m].iterations},
                                        {"seconds", outs[m].seconds},
                                        {"reached_target", outs[m].reached_target},
                                        {"objective", outs[m].trace.back().objective}};
      }
      for (int m = 0; m < 2; ++m) {
        for (const auto& tp : outs[m].trace) {
          auto& slot = rows.try_emplace(tp.k, std::array<const TracePoint*, 2>{nullptr, nullptr}).first->second;
          slot[std::size_t(m)] = &tp;
        }
      }
      std::ofstream os(cmp_trace);
      if (!os) throw std::runtime_error("cannot open " + cmp_trace);
      os << "k,objective_hydra2,suboptimality_hydra2,duality_gap_hydra2,objective_hydra,suboptimality_hydra,"
            "duality_gap_hydra\n";
      for (const auto& [k, slot] : rows) {
        os << k;
        for (const auto* tp : slot) {
          if (tp) {
            os << ',' << num(tp->objective) << ',' << num(tp->suboptimality) << ',' << num(tp->duality_gap);
          } else {
            os << ",,,";
          }
        }
        os << '\n';
      }
      auto m = manifest_base("compare", argc, argv);
      m["problem"] = problem_json(cmp_prob, as);
      m["stepsize"] = {{"rule", to_string(D.rule)}, {"meta", meta_to_json(D.meta)}};
      m["run"] = run_args_json(cmp_run, seed);
      m["run"].erase("mode");
      m["results"] = results;
      m["outputs"] = {cmp_trace};
      write_json(cmp_manifest, m);
      std::cout << results.dump() << '\n';
      return 0;
    }

    if (*c_bound) {
      const auto b = iteration_bound(b_c1, b_c2, b_rho, b_eps, b_tau, b_s);
      std::cout << json{{"k_min", b.k_min}, {"C1", b.C1}, {"C2", b.C2}, {"rho", b.rho}, {"eps", b.epsilon},
                        {"tau", b_tau}, {"s", b_s}}
                       .dump()
                << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (category_of(e.code())) {
      case ErrorCategory::Validation: return 2;
      case ErrorCategory::Numeric: return 3;
      case ErrorCategory::Runtime: return 4;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
