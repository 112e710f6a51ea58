#pragma once

#include <cmath>

#include "tesr/tensor.hpp"

namespace tesr {

/// Pairs closer than this are treated as coincident: their distance gradient
/// is taken to be the zero vector (a valid subgradient).
inline constexpr double kCoincidentDistance = 1e-12;

/// Euclidean distances between all rows of `a`. Symmetric with exact zeros on
/// the diagonal; each entry is computed once from the row difference so that
/// (i,j) and (j,i) are bit-identical.
inline Tensor2D pairwise_distance_matrix(const Tensor2D& a) {
  require(a.rows() >= 1, "pairwise_distance_matrix: need at least one row");
  require_finite(a, "pairwise_distance_matrix");
  const Index n = a.rows();
  const Index p = a.cols();
  Tensor2D d = Tensor2D::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double* ri = a.data() + i * p;
    for (Index j = i + 1; j < n; ++j) {
      const double* rj = a.data() + j * p;
      double s = 0.0;
      for (Index k = 0; k < p; ++k) {
        const double diff = ri[k] - rj[k];
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

/// Distances between every row of `a` and every row of `b` (entry (i,j) is
/// ||a_i - b_j||).
inline Tensor2D cross_distance_matrix(const Tensor2D& a, const Tensor2D& b) {
  require(a.cols() == b.cols(), "cross_distance_matrix: dimension mismatch");
  require_finite(a, "cross_distance_matrix");
  require_finite(b, "cross_distance_matrix");
  const Index p = a.cols();
  Tensor2D d(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const double* ri = a.data() + i * p;
    for (Index j = 0; j < b.rows(); ++j) {
      const double* rj = b.data() + j * p;
      double s = 0.0;
      for (Index k = 0; k < p; ++k) {
        const double diff = ri[k] - rj[k];
        s += diff * diff;
      }
      d(i, j) = std::sqrt(s);
    }
  }
  return d;
}

/// Given weights w_ij on the distances ||a_i - b_j||, returns the gradient of
/// sum_ij w_ij ||a_i - b_j|| with respect to the rows of `a`:
///   grad_i = sum_j w_ij (a_i - b_j) / ||a_i - b_j||.
/// `dist` must be cross_distance_matrix(a, b). Coincident pairs contribute zero.
inline Tensor2D distance_weighted_gradient(const Tensor2D& a, const Tensor2D& b, const Tensor2D& dist,
                                           const Tensor2D& weights) {
  Tensor2D scaled(dist.rows(), dist.cols());
  for (Index i = 0; i < dist.rows(); ++i) {
    for (Index j = 0; j < dist.cols(); ++j) {
      const double r = dist(i, j);
      scaled(i, j) = r < kCoincidentDistance ? 0.0 : weights(i, j) / r;
    }
  }
  // sum_j s_ij (a_i - b_j) = a_i * rowsum(s)_i - (S b)_i
  Tensor2D grad = scaled.rowwise().sum().asDiagonal() * a;
  grad.noalias() -= scaled * b;
  return grad;
}

}  // namespace tesr
