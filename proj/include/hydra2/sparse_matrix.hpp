#pragma once

// Sparse n-by-d data matrix with both column-major (per-coordinate) and
// row-major (per-example) access, the uniform column partition and the
// per-row structure counts that every stepsize rule is built from.
//
// Indices are 0-based throughout; messages report 1-based positions.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hydra2/error.hpp"
#include "hydra2/numeric.hpp"

namespace hydra2 {

using Index = std::uint64_t;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// A read-only view of one column (or one row) of the matrix.
struct SparseSlice {
  std::span<const Index> indices;
  std::span<const double> values;

  std::size_t size() const noexcept { return indices.size(); }
};

class SparseMatrix {
 public:
  SparseMatrix() = default;

  /// Builds both storage orders from triplets. Exact zeros are dropped.
  /// Out-of-range indices and repeated (row, col) pairs are rejected.
  /// The last `padding_cols` columns are reserved as structurally empty
  /// padding (see validate()).
  static SparseMatrix from_triplets(std::size_t n_rows, std::size_t n_cols,
                                    std::vector<Triplet> triplets,
                                    std::size_t padding_cols = 0) {
    if (padding_cols > n_cols) {
      throw Error(ErrorCode::InvalidShape, "padding exceeds column count");
    }
    std::erase_if(triplets, [](const Triplet& t) { return t.value == 0.0; });
    for (const auto& t : triplets) {
      if (t.row >= n_rows || t.col >= n_cols) {
        throw Error(ErrorCode::IndexOutOfBounds,
                    "entry (" + std::to_string(t.row + 1) + ", " +
                        std::to_string(t.col + 1) + ") outside " +
                        std::to_string(n_rows) + "x" + std::to_string(n_cols));
      }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return a.col != b.col ? a.col < b.col : a.row < b.row;
    });
    for (std::size_t k = 1; k < triplets.size(); ++k) {
      if (triplets[k].col == triplets[k - 1].col && triplets[k].row == triplets[k - 1].row) {
        throw Error(ErrorCode::DuplicateEntry,
                    "duplicate entry (" + std::to_string(triplets[k].row + 1) + ", " +
                        std::to_string(triplets[k].col + 1) + ")",
                    triplets[k].row);
      }
    }

    SparseMatrix m;
    m.n_rows_ = n_rows;
    m.n_cols_ = n_cols;
    m.padding_cols_ = padding_cols;
    const std::size_t nnz = triplets.size();
    m.col_ptr_.assign(n_cols + 1, 0);
    m.row_idx_.resize(nnz);
    m.col_val_.resize(nnz);
    for (std::size_t k = 0; k < nnz; ++k) {
      ++m.col_ptr_[triplets[k].col + 1];
      m.row_idx_[k] = triplets[k].row;
      m.col_val_[k] = triplets[k].value;
    }
    std::partial_sum(m.col_ptr_.begin(), m.col_ptr_.end(), m.col_ptr_.begin());
    m.build_row_mirror();
    return m;
  }

  /// Adopts raw compressed-column arrays (used by the binary loader). No
  /// checks are made here; call validate() afterwards.
  static SparseMatrix from_csc(std::size_t n_rows, std::size_t n_cols, std::vector<Index> col_ptr,
                               std::vector<Index> row_idx, std::vector<double> values,
                               std::size_t padding_cols = 0) {
    SparseMatrix m;
    m.n_rows_ = n_rows;
    m.n_cols_ = n_cols;
    m.padding_cols_ = padding_cols;
    m.col_ptr_ = std::move(col_ptr);
    m.row_idx_ = std::move(row_idx);
    m.col_val_ = std::move(values);
    return m;
  }

  /// Adopts the row-major mirror as stored on disk. validate() checks it
  /// against the column-major arrays.
  void set_row_mirror(std::vector<Index> row_ptr, std::vector<Index> col_idx,
                      std::vector<double> values) {
    row_ptr_ = std::move(row_ptr);
    col_idx_ = std::move(col_idx);
    row_val_ = std::move(values);
  }

  std::size_t rows() const noexcept { return n_rows_; }
  std::size_t cols() const noexcept { return n_cols_; }
  std::size_t nnz() const noexcept { return row_idx_.size(); }
  /// Trailing all-zero columns appended so that d divides the node count.
  std::size_t padding_cols() const noexcept { return padding_cols_; }
  std::size_t data_cols() const noexcept { return n_cols_ - padding_cols_; }
  bool is_padding(std::size_t col) const noexcept { return col >= data_cols(); }

  /// Column i: its nonzero rows are the set D_i.
  SparseSlice col(std::size_t i) const noexcept {
    const auto b = col_ptr_[i], e = col_ptr_[i + 1];
    return {std::span<const Index>(row_idx_).subspan(b, e - b),
            std::span<const double>(col_val_).subspan(b, e - b)};
  }

  SparseSlice row(std::size_t j) const noexcept {
    const auto b = row_ptr_[j], e = row_ptr_[j + 1];
    return {std::span<const Index>(col_idx_).subspan(b, e - b),
            std::span<const double>(row_val_).subspan(b, e - b)};
  }

  std::span<const Index> col_ptr() const noexcept { return col_ptr_; }
  std::span<const Index> row_indices() const noexcept { return row_idx_; }
  std::span<const double> col_values() const noexcept { return col_val_; }
  std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
  std::span<const Index> col_indices() const noexcept { return col_idx_; }
  std::span<const double> row_values() const noexcept { return row_val_; }

  /// y = A x (column traversal, ascending column order per row).
  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(n_rows_, 0.0);
    for (std::size_t i = 0; i < n_cols_; ++i) {
      if (x[i] == 0.0) continue;
      const auto c = col(i);
      for (std::size_t k = 0; k < c.size(); ++k) y[c.indices[k]] += c.values[k] * x[i];
    }
    return y;
  }

  /// Returns a copy with every column scaled by `scale[i]`.
  SparseMatrix scale_columns(std::span<const double> scale) const {
    SparseMatrix m = *this;
    for (std::size_t i = 0; i < n_cols_; ++i) {
      for (auto k = m.col_ptr_[i]; k < m.col_ptr_[i + 1]; ++k) m.col_val_[k] *= scale[i];
    }
    m.build_row_mirror();
    return m;
  }

  /// Returns a copy with `extra` structurally empty padding columns appended.
  SparseMatrix with_padding(std::size_t extra) const {
    SparseMatrix m = *this;
    m.n_cols_ += extra;
    m.padding_cols_ += extra;
    m.col_ptr_.resize(m.n_cols_ + 1, m.col_ptr_.back());
    return m;
  }

  void build_row_mirror() {
    const std::size_t nnz = row_idx_.size();
    row_ptr_.assign(n_rows_ + 1, 0);
    for (auto r : row_idx_) ++row_ptr_[r + 1];
    std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
    col_idx_.resize(nnz);
    row_val_.resize(nnz);
    std::vector<Index> next(row_ptr_.begin(), row_ptr_.end() - 1);
    for (std::size_t i = 0; i < n_cols_; ++i) {
      for (auto k = col_ptr_[i]; k < col_ptr_[i + 1]; ++k) {
        const auto dst = next[row_idx_[k]]++;
        col_idx_[dst] = i;
        row_val_[dst] = col_val_[k];
      }
    }
  }

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::size_t padding_cols_ = 0;
  std::vector<Index> col_ptr_{0};
  std::vector<Index> row_idx_;
  std::vector<double> col_val_;
  std::vector<Index> row_ptr_{0};
  std::vector<Index> col_idx_;
  std::vector<double> row_val_;
};

/// Throws unless every row and every non-padding column holds a nonzero,
/// indices are in range and strictly increasing within each column, and the
/// row-major mirror agrees with the column-major arrays.
inline void validate(const SparseMatrix& m) {
  const auto cp = m.col_ptr();
  const auto ri = m.row_indices();
  if (cp.size() != m.cols() + 1 || cp.front() != 0 || cp.back() != ri.size() ||
      m.col_values().size() != ri.size()) {
    throw Error(ErrorCode::FormatError, "inconsistent column-major arrays");
  }
  for (std::size_t i = 0; i < m.cols(); ++i) {
    if (cp[i + 1] < cp[i]) throw Error(ErrorCode::FormatError, "column pointers decrease", i);
    for (auto k = cp[i]; k < cp[i + 1]; ++k) {
      if (ri[k] >= m.rows()) {
        throw Error(ErrorCode::IndexOutOfBounds,
                    "row index " + std::to_string(ri[k] + 1) + " in column " +
                        std::to_string(i + 1),
                    i);
      }
      if (k > cp[i] && ri[k] <= ri[k - 1]) {
        throw Error(ErrorCode::DuplicateEntry,
                    "column " + std::to_string(i + 1) + " repeats or misorders row " +
                        std::to_string(ri[k] + 1),
                    i);
      }
    }
    if (m.is_padding(i)) {
      if (cp[i + 1] != cp[i]) {
        throw Error(ErrorCode::FormatError,
                    "padding column " + std::to_string(i + 1) + " holds entries", i);
      }
    } else if (cp[i + 1] == cp[i]) {
      throw Error(ErrorCode::EmptyColumn, "column " + std::to_string(i + 1) + " is empty", i);
    }
  }
  const auto rp = m.row_ptr();
  if (rp.size() != m.rows() + 1 || rp.back() != ri.size()) {
    throw Error(ErrorCode::FormatError, "inconsistent row-major mirror");
  }
  std::vector<Index> seen(m.rows(), 0);
  for (auto r : ri) ++seen[r];
  for (std::size_t j = 0; j < m.rows(); ++j) {
    if (seen[j] == 0) throw Error(ErrorCode::EmptyRow, "row " + std::to_string(j + 1) + " is empty", j);
    if (rp[j + 1] - rp[j] != seen[j]) throw Error(ErrorCode::FormatError, "row mirror count mismatch", j);
  }
  // Mirror contents: every (row, col, value) must appear in both orders.
  std::vector<Index> next(rp.begin(), rp.end() - 1);
  for (std::size_t i = 0; i < m.cols(); ++i) {
    const auto c = m.col(i);
    for (std::size_t k = 0; k < c.size(); ++k) {
      const auto j = c.indices[k];
      const auto pos = next[j]++;
      if (m.col_indices()[pos] != i || m.row_values()[pos] != c.values[k]) {
        throw Error(ErrorCode::FormatError, "row mirror disagrees with columns", j);
      }
    }
  }
}

/// Contiguous partition of the d coordinates into c blocks of s each.
struct Partition {
  std::size_t d = 0;
  std::size_t c = 1;
  std::size_t s = 0;

  std::size_t node_of(std::size_t i) const noexcept { return i / s; }
  std::size_t begin(std::size_t l) const noexcept { return l * s; }
  std::size_t end(std::size_t l) const noexcept { return (l + 1) * s; }
};

inline Partition partition_uniform(std::size_t d, std::size_t c) {
  if (c == 0 || d == 0 || d % c != 0) {
    throw Error(ErrorCode::NotDivisible,
                "d=" + std::to_string(d) + " is not divisible by c=" + std::to_string(c));
  }
  return Partition{d, c, d / c};
}

struct RowStats {
  std::vector<std::size_t> omega;        // nonzeros in row j
  std::vector<std::size_t> omega_prime;  // partitions active in row j
  std::vector<double> col_sq_norms;      // sum_j A_ji^2

  std::size_t max_omega() const {
    return omega.empty() ? 0 : *std::max_element(omega.begin(), omega.end());
  }
  std::size_t max_omega_prime() const {
    return omega_prime.empty() ? 0 : *std::max_element(omega_prime.begin(), omega_prime.end());
  }
};

inline RowStats row_stats(const SparseMatrix& m, const Partition& p) {
  if (p.d != m.cols()) {
    throw Error(ErrorCode::ShardMismatch, "partition covers " + std::to_string(p.d) +
                                              " coordinates but matrix has " +
                                              std::to_string(m.cols()));
  }
  RowStats st;
  st.omega.resize(m.rows());
  st.omega_prime.resize(m.rows());
  for (std::size_t j = 0; j < m.rows(); ++j) {
    const auto r = m.row(j);
    st.omega[j] = r.size();
    // columns within a row are ascending, so active blocks appear in runs
    std::size_t active = 0;
    std::size_t last = static_cast<std::size_t>(-1);
    for (auto col : r.indices) {
      const auto node = p.node_of(col);
      if (node != last) {
        ++active;
        last = node;
      }
    }
    st.omega_prime[j] = active;
  }
  st.col_sq_norms.resize(m.cols());
  for (std::size_t i = 0; i < m.cols(); ++i) {
    CompensatedSum acc;
    for (double v : m.col(i).values) acc.add(v * v);
    st.col_sq_norms[i] = acc.value();
  }
  return st;
}

}  // namespace hydra2
