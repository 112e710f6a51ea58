#pragma once

#include <array>
#include <cmath>
#include <random>

#include "tesr/distance.hpp"
#include "tesr/tensor.hpp"

namespace tesr {

namespace detail {

/// U-centering of a distance matrix: for i != j
///   A~_ij = A_ij - a_i./(n-2) - a_.j/(n-2) + a../((n-1)(n-2)),  A~_ii = 0.
inline Tensor2D u_center(const Tensor2D& a) {
  const Index n = a.rows();
  const double nd = static_cast<double>(n);
  const Vector row = a.rowwise().sum();
  const double total = row.sum();
  Tensor2D c(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      c(i, j) = i == j ? 0.0 : a(i, j) - row[i] / (nd - 2.0) - row[j] / (nd - 2.0) + total / ((nd - 1.0) * (nd - 2.0));
    }
  }
  return c;
}

inline void check_pair(const Tensor2D& u, const Tensor2D& v, const char* op) {
  require(u.rows() == v.rows(), std::string(op) + ": row count mismatch " + shape_str(u) + " vs " + shape_str(v));
  require_finite(u, op);
  require_finite(v, op);
}

}  // namespace detail

/// Unbiased squared distance covariance of paired samples (rows of u, v),
/// computed in O(n^2) from U-centered distance matrices:
///   sum_{i != j} A~_ij B~_ij / (n (n - 3)).
/// Equals the order-4 U-statistic; may be negative.
inline double dcov_u(const Tensor2D& u, const Tensor2D& v) {
  detail::check_pair(u, v, "dcov_u");
  const Index n = u.rows();
  require(n >= 4, "dcov_u: need at least 4 samples, got " + std::to_string(n));
  const Tensor2D a = detail::u_center(pairwise_distance_matrix(u));
  const Tensor2D b = detail::u_center(pairwise_distance_matrix(v));
  const double nd = static_cast<double>(n);
  return a.cwiseProduct(b).sum() / (nd * (nd - 3.0));
}

/// Direct average of the order-4 kernel h over all C(n,4) quadruples. Only
/// meant as an oracle for dcov_u.
inline double dcov_u_bruteforce(const Tensor2D& u, const Tensor2D& v) {
  detail::check_pair(u, v, "dcov_u_bruteforce");
  const Index n = u.rows();
  require(n >= 4 && n <= 14, "dcov_u_bruteforce: n must be in [4, 14], got " + std::to_string(n));
  const Tensor2D a = pairwise_distance_matrix(u);
  const Tensor2D b = pairwise_distance_matrix(v);
  double total = 0.0;
  long count = 0;
  for (Index i1 = 0; i1 < n; ++i1)
    for (Index i2 = i1 + 1; i2 < n; ++i2)
      for (Index i3 = i2 + 1; i3 < n; ++i3)
        for (Index i4 = i3 + 1; i4 < n; ++i4) {
          const std::array<Index, 4> q{i1, i2, i3, i4};
          double cross = 0.0;
          double sum_a = 0.0;
          double sum_b = 0.0;
          double rows = 0.0;
          for (int s = 0; s < 4; ++s) {
            double ra = 0.0;
            double rb = 0.0;
            for (int t = 0; t < 4; ++t) {
              if (s == t) continue;
              const double da = a(q[s], q[t]);
              const double db = b(q[s], q[t]);
              cross += da * db;
              ra += da;
              rb += db;
            }
            sum_a += ra;
            sum_b += rb;
            rows += ra * rb;
          }
          total += cross / 4.0 + sum_a * sum_b / 24.0 - rows / 4.0;
          ++count;
        }
  return total / static_cast<double>(count);
}

struct ValueAndGrad {
  double value = 0.0;
  Tensor2D grad;
};

/// dcov_u together with its gradient with respect to the rows of u.
///
/// U-centering is an orthogonal projection on symmetric zero-diagonal
/// matrices, so d(sum A~ B~)/dA_ij = B~_ij and
///   d dcov / d u_i = 2 / (n(n-3)) * sum_j B~_ij (u_i - u_j) / ||u_i - u_j||.
inline ValueAndGrad dcov_u_with_grad(const Tensor2D& u, const Tensor2D& v) {
  detail::check_pair(u, v, "dcov_grad_u");
  const Index n = u.rows();
  require(n >= 4, "dcov_grad_u: need at least 4 samples, got " + std::to_string(n));
  const double nd = static_cast<double>(n);
  const double norm = nd * (nd - 3.0);
  const Tensor2D dist_u = pairwise_distance_matrix(u);
  const Tensor2D a = detail::u_center(dist_u);
  const Tensor2D b = detail::u_center(pairwise_distance_matrix(v));
  ValueAndGrad out;
  out.value = a.cwiseProduct(b).sum() / norm;
  out.grad = distance_weighted_gradient(u, u, dist_u, b * (2.0 / norm));
  return out;
}

inline Tensor2D dcov_grad_u(const Tensor2D& u, const Tensor2D& v) { return dcov_u_with_grad(u, v).grad; }

/// Two-sample energy distance with the pairwise kernel
///   h_e(u_i,u_j; v_i,v_j) = |u_i - v_j| + |u_j - v_i| - |u_i - u_j| - |v_i - v_j|
/// averaged over unordered pairs i < j.
inline double energy_distance(const Tensor2D& u, const Tensor2D& v) {
  detail::check_pair(u, v, "energy_distance");
  require(u.cols() == v.cols(), "energy_distance: dimension mismatch " + shape_str(u) + " vs " + shape_str(v));
  const Index n = u.rows();
  require(n >= 2, "energy_distance: need at least 2 samples");
  const Tensor2D cross = cross_distance_matrix(u, v);
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double cross_sum = cross.sum() - cross.diagonal().sum();
  const double within = 0.5 * (pairwise_distance_matrix(u).sum() + pairwise_distance_matrix(v).sum());
  return (cross_sum - within) / pairs;
}

inline ValueAndGrad energy_distance_with_grad(const Tensor2D& u, const Tensor2D& v) {
  detail::check_pair(u, v, "energy_grad_u");
  require(u.cols() == v.cols(), "energy_grad_u: dimension mismatch " + shape_str(u) + " vs " + shape_str(v));
  const Index n = u.rows();
  require(n >= 2, "energy_grad_u: need at least 2 samples");
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const Tensor2D cross = cross_distance_matrix(u, v);
  const Tensor2D within_u = pairwise_distance_matrix(u);
  const Tensor2D within_v = pairwise_distance_matrix(v);
  ValueAndGrad out;
  out.value = (cross.sum() - cross.diagonal().sum() - 0.5 * (within_u.sum() + within_v.sum())) / pairs;

  // Cross terms exclude the paired diagonal (i == j).
  Tensor2D cross_w = Tensor2D::Constant(n, n, 1.0 / pairs);
  cross_w.diagonal().setZero();
  out.grad = distance_weighted_gradient(u, v, cross, cross_w);
  out.grad -= distance_weighted_gradient(u, u, within_u, Tensor2D::Constant(n, n, 1.0 / pairs));
  return out;
}

inline Tensor2D energy_grad_u(const Tensor2D& u, const Tensor2D& v) { return energy_distance_with_grad(u, v).grad; }

/// n x r matrix of i.i.d. standard normal draws.
template <typename Rng>
Tensor2D gaussian_reference(Index n, Index r, Rng& rng) {
  require(n >= 1 && r >= 1, "gaussian_reference: dimensions must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor2D g(n, r);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  return g;
}

}  // namespace tesr
