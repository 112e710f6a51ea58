#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tesr {

/// Row-major dense matrix of 64-bit reals. Every sample matrix in the library
/// (covariates, responses, representation outputs) is one of these, one
/// observation per row.
using Tensor2D = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw Error(std::string(what) + ": non-finite entry");
}

inline std::string shape_str(const Tensor2D& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// Copies the listed rows of `m` into a new matrix, in order.
template <typename IndexRange>
Tensor2D gather_rows(const Tensor2D& m, const IndexRange& rows) {
  Tensor2D out(static_cast<Index>(std::size(rows)), m.cols());
  Index k = 0;
  for (auto r : rows) out.row(k++) = m.row(static_cast<Index>(r));
  return out;
}

inline Tensor2D hconcat(const Tensor2D& a, const Tensor2D& b) {
  require(a.rows() == b.rows(), "hconcat: row mismatch " + shape_str(a) + " vs " + shape_str(b));
  Tensor2D out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

inline Tensor2D vconcat(const Tensor2D& a, const Tensor2D& b) {
  if (a.size() == 0 && a.rows() == 0) return b;
  require(a.cols() == b.cols(), "vconcat: column mismatch " + shape_str(a) + " vs " + shape_str(b));
  Tensor2D out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace tesr
