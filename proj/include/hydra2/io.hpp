#pragma once

// File formats.
//
// Dataset binary (.h2m), little-endian:
//   char[4] "HY2M", u32 version (1),
//   u64 n, u64 d, u64 nnz, u64 c_hint, u64 padding_cols, u64 n_targets,
//   u64 col_ptr[d+1], u64 row_idx[nnz], f64 col_val[nnz],
//   u64 row_ptr[n+1], u64 col_idx[nnz], f64 row_val[nnz],
//   f64 targets[n_targets]
// Both traversal orders are stored so loading needs no transposition.
// Indices are 0-based.
//
// Stepsize sidecar (.h2d), little-endian:
//   char[4] "HY2D", u32 version (1), u32 rule (0..3 for D1..D4), u32 reserved,
//   u64 tau, u64 c, u64 s, u64 d, f64 values[d]
//
// Stepsize JSON: {"rule", "tau", "c", "s", "meta": {...}, "values": [...]}.
//
// svmlight text: "<label> <index>:<value> ..." with 1-based indices,
// '#' starting a comment and "qid:" tokens ignored.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hydra2/error.hpp"
#include "hydra2/solver.hpp"
#include "hydra2/sparse_matrix.hpp"
#include "hydra2/stepsize.hpp"

namespace hydra2 {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

struct Dataset {
  SparseMatrix A;
  std::vector<double> targets;  // b per row (lasso) or labels per column (svm)
  std::size_t c_hint = 0;
};

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void write_array(std::ostream& os, std::span<const T> v) {
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(T)));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorCode::FormatError, "truncated file");
  return v;
}

template <class T>
std::vector<T> read_array(std::istream& is, std::uint64_t count) {
  // Guard against absurd counts from corrupted headers before allocating.
  if (count > (std::uint64_t(1) << 40)) throw Error(ErrorCode::FormatError, "implausible array length");
  std::vector<T> v(count);
  is.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(T)));
  if (!is) throw Error(ErrorCode::FormatError, "truncated file");
  return v;
}

inline std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw Error(ErrorCode::FormatError, "cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw Error(ErrorCode::FormatError, "cannot open '" + path + "'");
  return is;
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  const auto& a = ds.A;
  os.write("HY2M", 4);
  detail::write_pod<std::uint32_t>(os, 1);
  for (std::uint64_t v : {std::uint64_t(a.rows()), std::uint64_t(a.cols()), std::uint64_t(a.nnz()),
                          std::uint64_t(ds.c_hint), std::uint64_t(a.padding_cols()),
                          std::uint64_t(ds.targets.size())}) {
    detail::write_pod(os, v);
  }
  detail::write_array(os, a.col_ptr());
  detail::write_array(os, a.row_indices());
  detail::write_array(os, a.col_values());
  detail::write_array(os, a.row_ptr());
  detail::write_array(os, a.col_indices());
  detail::write_array(os, a.row_values());
  detail::write_array(os, std::span<const double>(ds.targets));
}

inline Dataset read_dataset(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "HY2M", 4) != 0) throw Error(ErrorCode::FormatError, "not a dataset file");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != 1) throw Error(ErrorCode::FormatError, "unsupported dataset version " + std::to_string(version));
  const auto n = detail::read_pod<std::uint64_t>(is);
  const auto d = detail::read_pod<std::uint64_t>(is);
  const auto nnz = detail::read_pod<std::uint64_t>(is);
  const auto c_hint = detail::read_pod<std::uint64_t>(is);
  const auto padding = detail::read_pod<std::uint64_t>(is);
  const auto n_targets = detail::read_pod<std::uint64_t>(is);
  auto col_ptr = detail::read_array<Index>(is, d + 1);
  auto row_idx = detail::read_array<Index>(is, nnz);
  auto col_val = detail::read_array<double>(is, nnz);
  auto row_ptr = detail::read_array<Index>(is, n + 1);
  auto col_idx = detail::read_array<Index>(is, nnz);
  auto row_val = detail::read_array<double>(is, nnz);
  Dataset ds;
  ds.targets = detail::read_array<double>(is, n_targets);
  ds.c_hint = c_hint;
  if (padding > d) throw Error(ErrorCode::FormatError, "padding exceeds d");
  ds.A = SparseMatrix::from_csc(n, d, std::move(col_ptr), std::move(row_idx), std::move(col_val), padding);
  ds.A.set_row_mirror(std::move(row_ptr), std::move(col_idx), std::move(row_val));
  validate(ds.A);
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  auto os = detail::open_out(path, true);
  write_dataset(os, ds);
}

inline Dataset load_dataset(const std::string& path) {
  auto is = detail::open_in(path, true);
  return read_dataset(is);
}

// ---------------------------------------------------------------------------
// svmlight

struct SvmlightData {
  std::vector<double> labels;     // one per example line
  std::vector<Triplet> entries;   // row = example (0-based), col = feature (0-based)
  std::size_t n_features = 0;
};

inline SvmlightData parse_svmlight(std::istream& is) {
  SvmlightData out;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + what, line_no);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    const std::size_t example = out.labels.size();
    try {
      std::size_t used = 0;
      out.labels.push_back(std::stod(tok, &used));
      if (used != tok.size()) fail("bad label '" + tok + "'");
    } catch (const std::logic_error&) {
      fail("bad label '" + tok + "'");
    }
    long long last = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) fail("expected index:value, got '" + tok + "'");
      const auto key = tok.substr(0, colon);
      if (key == "qid") continue;
      long long idx = 0;
      double val = 0.0;
      try {
        std::size_t used = 0;
        idx = std::stoll(key, &used);
        if (used != key.size()) fail("bad feature index '" + key + "'");
        const auto vs = tok.substr(colon + 1);
        val = std::stod(vs, &used);
        if (used != vs.size()) fail("bad value '" + vs + "'");
      } catch (const std::logic_error&) {
        fail("bad token '" + tok + "'");
      }
      if (idx < 1) fail("feature indices are 1-based, got " + std::to_string(idx));
      if (idx <= last) fail("feature indices must increase within a line");
      last = idx;
      if (val != 0.0) out.entries.push_back({Index(example), Index(idx - 1), val});
      out.n_features = std::max<std::size_t>(out.n_features, std::size_t(idx));
    }
  }
  return out;
}

/// Orientation of an svmlight file inside the data matrix.
enum class Layout {
  ExamplesAsRows,     // LASSO: row = example, column = feature, targets = b
  ExamplesAsColumns,  // SVM dual: row = feature, column = example, targets = labels
};

struct IngestOptions {
  Layout layout = Layout::ExamplesAsRows;
  bool normalize_columns = false;
  std::size_t pad_to_multiple_of = 0;  // 0 or 1: no padding
};

/// Builds a validated dataset from parsed svmlight content.
inline Dataset to_dataset(const SvmlightData& data, const IngestOptions& opt) {
  std::vector<Triplet> t = data.entries;
  std::size_t n = data.labels.size(), d = data.n_features;
  if (opt.layout == Layout::ExamplesAsColumns) {
    for (auto& e : t) std::swap(e.row, e.col);
    std::swap(n, d);
  }
  Dataset ds;
  ds.A = SparseMatrix::from_triplets(n, d, std::move(t));
  ds.targets = data.labels;
  validate(ds.A);
  if (opt.normalize_columns) {
    std::vector<double> scale(d);
    for (std::size_t i = 0; i < d; ++i) {
      CompensatedSum acc;
      for (double v : ds.A.col(i).values) acc.add(v * v);
      scale[i] = 1.0 / std::sqrt(acc.value());
    }
    ds.A = ds.A.scale_columns(scale);
  }
  if (opt.pad_to_multiple_of > 1) {
    const auto c = opt.pad_to_multiple_of;
    const auto extra = (c - d % c) % c;
    if (extra) ds.A = ds.A.with_padding(extra);
    ds.c_hint = c;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Stepsize vectors

inline nlohmann::json meta_to_json(const StepsizeMeta& m) {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("beta_star", m.beta_star);
  put("beta1", m.beta1);
  put("sigma", m.sigma);
  put("sigma_prime", m.sigma_prime);
  put("sigma_tilde", m.sigma_tilde);
  put("max_omega", m.max_omega);
  put("factor", m.factor);
  return j;
}

inline StepsizeMeta meta_from_json(const nlohmann::json& j) {
  StepsizeMeta m;
  auto get = [&](const char* key, std::optional<double>& v) {
    if (j.contains(key)) v = j.at(key).get<double>();
  };
  get("beta_star", m.beta_star);
  get("beta1", m.beta1);
  get("sigma", m.sigma);
  get("sigma_prime", m.sigma_prime);
  get("sigma_tilde", m.sigma_tilde);
  get("max_omega", m.max_omega);
  get("factor", m.factor);
  return m;
}

inline nlohmann::json stepsize_to_json(const StepsizeVector& D) {
  return {{"rule", to_string(D.rule)}, {"tau", D.tau}, {"c", D.c}, {"s", D.s},
          {"meta", meta_to_json(D.meta)}, {"values", D.values}};
}

inline StepsizeVector stepsize_from_json(const nlohmann::json& j) {
  try {
    StepsizeVector D;
    D.rule = parse_rule(j.at("rule").get<std::string>());
    D.tau = j.at("tau").get<std::size_t>();
    D.c = j.at("c").get<std::size_t>();
    D.s = j.at("s").get<std::size_t>();
    if (j.contains("meta")) D.meta = meta_from_json(j.at("meta"));
    D.values = j.at("values").get<std::vector<double>>();
    return D;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("stepsize json: ") + e.what());
  }
}

inline void write_stepsize_binary(std::ostream& os, const StepsizeVector& D) {
  os.write("HY2D", 4);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(D.rule));
  detail::write_pod<std::uint32_t>(os, 0);
  for (std::uint64_t v : {std::uint64_t(D.tau), std::uint64_t(D.c), std::uint64_t(D.s),
                          std::uint64_t(D.values.size())}) {
    detail::write_pod(os, v);
  }
  detail::write_array(os, std::span<const double>(D.values));
}

inline StepsizeVector read_stepsize_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "HY2D", 4) != 0) throw Error(ErrorCode::FormatError, "not a stepsize file");
  if (detail::read_pod<std::uint32_t>(is) != 1) throw Error(ErrorCode::FormatError, "unsupported stepsize version");
  const auto rule = detail::read_pod<std::uint32_t>(is);
  if (rule > 3) throw Error(ErrorCode::FormatError, "bad rule tag");
  detail::read_pod<std::uint32_t>(is);
  StepsizeVector D;
  D.rule = static_cast<StepsizeRule>(rule);
  D.tau = detail::read_pod<std::uint64_t>(is);
  D.c = detail::read_pod<std::uint64_t>(is);
  D.s = detail::read_pod<std::uint64_t>(is);
  D.values = detail::read_array<double>(is, detail::read_pod<std::uint64_t>(is));
  return D;
}

inline void save_stepsize(const std::string& path, const StepsizeVector& D) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    auto os = detail::open_out(path, false);
    os << stepsize_to_json(D).dump(1) << '\n';
  } else {
    auto os = detail::open_out(path, true);
    write_stepsize_binary(os, D);
  }
}

inline StepsizeVector load_stepsize(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    auto is = detail::open_in(path, false);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, std::string("stepsize json: ") + e.what());
    }
    return stepsize_from_json(j);
  }
  auto is = detail::open_in(path, true);
  return read_stepsize_binary(is);
}

// ---------------------------------------------------------------------------
// Traces

inline void write_trace_csv(std::ostream& os, std::span<const TracePoint> trace) {
  os << "k,seconds,objective,suboptimality,duality_gap\n";
  os << std::setprecision(17);
  for (const auto& tp : trace) {
    os << tp.k << ',' << tp.seconds << ',' << tp.objective << ',' << tp.suboptimality << ','
       << tp.duality_gap << '\n';
  }
}

}  // namespace hydra2
