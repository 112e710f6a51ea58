#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "tesr/dataset.hpp"
#include "tesr/dependence.hpp"
#include "tesr/rmsprop.hpp"
#include "tesr/training.hpp"

namespace tesr {

/// Linear representation x -> B^T x with B of shape d x r.
struct LinearRep {
  Tensor2D B;

  Index dim() const { return B.rows(); }
  Index rank() const { return B.cols(); }
  Tensor2D transform(const Tensor2D& x) const { return x * B; }
};

struct LinearFitOptions {
  int steps = 2000;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  Index batch_size = 64;
};

/// Affine map that centers and whitens covariates: (x - mean) * W with
/// W = Sigma^{-1/2} (symmetric inverse square root).
struct Whitening {
  RowVector mean;
  Tensor2D W;

  Tensor2D apply(const Tensor2D& x) const { return (x.rowwise() - mean) * W; }
};

inline Whitening fit_whitening(const Tensor2D& x, double ridge = 1e-10) {
  require(x.rows() >= 2, "fit_whitening: need at least 2 rows");
  Whitening w;
  w.mean = x.colwise().mean();
  const Tensor2D c = x.rowwise() - w.mean;
  const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, "fit_whitening: eigendecomposition failed");
  const Eigen::VectorXd inv_sqrt = (eig.eigenvalues().array().max(0.0) + ridge).rsqrt();
  w.W = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  return w;
}

/// Thin-QR orthonormal basis of span(B), signs fixed so the diagonal of R is
/// non-negative.
inline Tensor2D orthonormalize(const Tensor2D& B) {
  if (B.cols() == 0) return B;
  require(B.cols() <= B.rows(), "orthonormalize: more columns than rows");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(B.rows(), B.cols());
  const Eigen::MatrixXd R = qr.matrixQR().topRows(B.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < B.cols(); ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

inline double orthonormality_penalty(const Tensor2D& B) {
  return (B.transpose() * B - Tensor2D::Identity(B.cols(), B.cols())).squaredNorm();
}

/// d/dB ||B^T B - I||_F^2 = 4 B (B^T B - I)
inline Tensor2D orthonormality_penalty_grad(const Tensor2D& B) {
  return 4.0 * B * (B.transpose() * B - Tensor2D::Identity(B.cols(), B.cols()));
}

namespace detail {

inline ParameterSet wrap_matrix(const Tensor2D& B) {
  ParameterSet p;
  p.layers.push_back({B, RowVector(0)});
  return p;
}

template <typename Rng>
Tensor2D random_init(Index d, Index r, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor2D B(d, r);
  for (Index i = 0; i < B.size(); ++i) B.data()[i] = n01(rng);
  return orthonormalize(B);
}

}  // namespace detail

/// Value and B-gradient of the linear source objective on one batch per
/// source:
///   sum_s [ -V(X_s B, Y_s) + lambda_e ||B^T B - I||^2 ] + lambda_z V(X_pool B, Z)
inline ValueAndGrad linear_source_objective(const Tensor2D& B, const std::vector<Tensor2D>& xs,
                                            const std::vector<Tensor2D>& ys, double lambda_e, double lambda_z) {
  std::vector<Tensor2D> reps;
  for (const auto& x : xs) reps.push_back(x * B);
  const std::vector<Tensor2D> gammas(xs.size());
  // source_loss wants a Gaussian reference only when lambda_e > 0; the linear
  // objective replaces that term by the orthonormality penalty.
  const SourceLossResult sl = source_loss(reps, ys, gammas, 0.0, lambda_z);
  ValueAndGrad out;
  out.value = sl.loss;
  out.grad = Tensor2D::Zero(B.rows(), B.cols());
  for (std::size_t s = 0; s < xs.size(); ++s) out.grad += xs[s].transpose() * sl.grads[s];
  const double S = static_cast<double>(xs.size());
  if (lambda_e > 0) {
    out.value += lambda_e * S * orthonormality_penalty(B);
    out.grad += lambda_e * S * orthonormality_penalty_grad(B);
  }
  return out;
}

/// Value and gradient of the linear target objective in B_t:
///   -V(X [B_c, B_t], Y) + lambda_e0 ||B_t^T B_t - I||^2 + lambda_c ||B_c^T B_t||^2
inline ValueAndGrad linear_target_objective(const Tensor2D& Bt, const Tensor2D& Bc, const Tensor2D& x,
                                            const Tensor2D& y, double lambda_e0, double lambda_c) {
  const Tensor2D joint = hconcat(x * Bc, x * Bt);
  const ValueAndGrad v = dcov_u_with_grad(joint, y);
  ValueAndGrad out;
  out.value = -v.value;
  out.grad = -(x.transpose() * v.grad.rightCols(Bt.cols()));
  if (lambda_e0 > 0) {
    out.value += lambda_e0 * orthonormality_penalty(Bt);
    out.grad += lambda_e0 * orthonormality_penalty_grad(Bt);
  }
  if (lambda_c > 0) {
    const Tensor2D cross = Bc.transpose() * Bt;
    out.value += lambda_c * cross.squaredNorm();
    out.grad += lambda_c * 2.0 * Bc * cross;
  }
  return out;
}

/// Fitted basis plus the soft-penalty values reached before the final
/// orthonormalization.
struct LinearFit {
  LinearRep rep;
  double soft_orthonormality = 0.0;
  double soft_cross = 0.0;
};

/// Shared linear representation from the sources by RMSprop on mini-batches
/// (one batch per source per step), then orthonormalized. Covariates are used
/// as given; whiten them first for the identity-covariance setting.
template <typename Rng>
LinearFit fit_linear_sirep(const std::vector<DomainDataset>& sources, Index r_c, double lambda_e, double lambda_z,
                           const LinearFitOptions& opt, Rng& rng, const Tensor2D* init = nullptr) {
  require(!sources.empty(), "fit_linear_sirep: need at least one source");
  const Index d = sources.front().dim();
  for (const auto& s : sources) {
    s.validate();
    require(s.dim() == d, "fit_linear_sirep: sources disagree on covariate dimension");
    require(s.size() >= 4, "fit_linear_sirep: every source needs at least 4 rows");
  }
  require(r_c >= 1, "fit_linear_sirep: r_c must be positive");
  require(r_c <= d, "fit_linear_sirep: r_c = " + std::to_string(r_c) + " exceeds d = " + std::to_string(d));
  require(lambda_e >= 0 && lambda_z >= 0, "fit_linear_sirep: weights must be non-negative");

  Tensor2D B = init ? *init : detail::random_init(d, r_c, rng);
  require(B.rows() == d && B.cols() == r_c, "fit_linear_sirep: initial basis has shape " + shape_str(B));
  ParameterSet p = detail::wrap_matrix(B);
  OptimizerState state(p, RmspropOptions{opt.learning_rate, 0.99, 1e-8, opt.weight_decay});

  std::vector<Tensor2D> responses;
  std::vector<BatchSampler> samplers;
  Index min_n = sources.front().size();
  for (const auto& s : sources) {
    responses.push_back(response_features(s));
    samplers.emplace_back(s.size(), rng);
    min_n = std::min(min_n, s.size());
  }
  const Index batch = std::min(opt.batch_size, min_n);
  std::vector<Tensor2D> xs(sources.size()), ys(sources.size());
  for (int step = 0; step < opt.steps; ++step) {
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const auto idx = samplers[s].next(batch);
      xs[s] = gather_rows(sources[s].x, idx);
      ys[s] = gather_rows(responses[s], idx);
    }
    const ValueAndGrad vg = linear_source_objective(p.layers[0].weight, xs, ys, lambda_e, lambda_z);
    ParameterSet g = detail::wrap_matrix(vg.grad);
    rmsprop_step(p, g, state);
  }
  LinearFit fit;
  fit.soft_orthonormality = std::sqrt(orthonormality_penalty(p.layers[0].weight));
  fit.rep.B = orthonormalize(p.layers[0].weight);
  return fit;
}

/// Target augmentation B_t with B_c fixed. The result is projected onto the
/// orthogonal complement of span(B_c) and orthonormalized.
template <typename Rng>
LinearFit fit_linear_augment(const DomainDataset& target, const LinearRep& Bc, Index r_t, double lambda_e0,
                             double lambda_c, const LinearFitOptions& opt, Rng& rng, const Tensor2D* init = nullptr) {
  target.validate();
  const Index d = target.dim();
  require(Bc.dim() == d, "fit_linear_augment: B_c has " + std::to_string(Bc.dim()) + " rows, data has d = " +
                             std::to_string(d));
  require(r_t >= 1, "fit_linear_augment: r_t must be positive");
  require(r_t <= d - Bc.rank(), "fit_linear_augment: r_t = " + std::to_string(r_t) +
                                    " leaves no room in the orthogonal complement of B_c (d - r_c = " +
                                    std::to_string(d - Bc.rank()) + ")");
  require(target.size() >= 4, "fit_linear_augment: target needs at least 4 rows");
  require(lambda_e0 >= 0 && lambda_c >= 0, "fit_linear_augment: weights must be non-negative");

  Tensor2D B = init ? *init : detail::random_init(d, r_t, rng);
  require(B.rows() == d && B.cols() == r_t, "fit_linear_augment: initial basis has shape " + shape_str(B));
  ParameterSet p = detail::wrap_matrix(B);
  OptimizerState state(p, RmspropOptions{opt.learning_rate, 0.99, 1e-8, opt.weight_decay});
  const Tensor2D response = response_features(target);
  BatchSampler sampler(target.size(), rng);
  const Index batch = std::min(opt.batch_size, target.size());
  for (int step = 0; step < opt.steps; ++step) {
    const auto idx = sampler.next(batch);
    const ValueAndGrad vg = linear_target_objective(p.layers[0].weight, Bc.B, gather_rows(target.x, idx),
                                                    gather_rows(response, idx), lambda_e0, lambda_c);
    ParameterSet g = detail::wrap_matrix(vg.grad);
    rmsprop_step(p, g, state);
  }
  const Tensor2D& soft = p.layers[0].weight;
  LinearFit fit;
  fit.soft_orthonormality = std::sqrt(orthonormality_penalty(soft));
  fit.soft_cross = (Bc.B.transpose() * soft).norm();
  const Tensor2D Qc = orthonormalize(Bc.B);
  fit.rep.B = orthonormalize(soft - Qc * (Qc.transpose() * soft));
  return fit;
}

/// P_B = X B B^T X^T for centered data X and orthonormal B.
inline Tensor2D projection_matrix(const Tensor2D& xc, const Tensor2D& B, double tol = 1e-10) {
  require(xc.cols() == B.rows(), "projection_matrix: X has " + std::to_string(xc.cols()) + " columns, B has " +
                                     std::to_string(B.rows()) + " rows");
  if (B.cols() == 0) return Tensor2D::Zero(xc.rows(), xc.rows());
  const double dev = (B.transpose() * B - Tensor2D::Identity(B.cols(), B.cols())).cwiseAbs().maxCoeff();
  require(dev <= tol, "projection_matrix: B is not orthonormal (max |B^T B - I| = " + std::to_string(dev) + ")");
  const Tensor2D xb = xc * B;
  return xb * xb.transpose();
}

/// Principal angles between span(B1) and span(B2), ascending, in [0, pi/2].
inline std::vector<double> principal_angles(const Tensor2D& B1, const Tensor2D& B2) {
  require(B1.rows() == B2.rows(), "principal_angles: bases live in different dimensions");
  require(B1.cols() >= 1 && B2.cols() >= 1, "principal_angles: empty basis");
  const Tensor2D Q1 = orthonormalize(B1);
  const Tensor2D Q2 = orthonormalize(B2);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Q1.transpose() * Q2);
  const Eigen::VectorXd sv = svd.singularValues();
  std::vector<double> angles;
  for (Index i = 0; i < sv.size(); ++i) angles.push_back(std::acos(std::clamp(sv[i], 0.0, 1.0)));
  std::sort(angles.begin(), angles.end());
  return angles;
}

inline double max_principal_angle(const Tensor2D& B1, const Tensor2D& B2) {
  const auto a = principal_angles(B1, B2);
  return a.back();
}

}  // namespace tesr
