#pragma once

#include <vector>

#include "tesr/dataset.hpp"
#include "tesr/dependence.hpp"

namespace tesr {

struct SourceLossResult {
  double loss = 0.0;
  double sufficiency = 0.0;  // sum_s dcov(R(X_s), Y_s)
  double gaussianity = 0.0;  // sum_s energy(R(X_s), gamma_s)
  double invariance = 0.0;   // dcov(R(X_pool), Z)
  std::vector<Tensor2D> grads;  // d loss / d R(X_s), one per source
};

/// Source objective on one mini-batch per source:
///   sum_s { -dcov(R_s, Y_s) + lambda_e * energy(R_s, gamma_s) } + lambda_z * dcov(R_pool, Z)
/// where R_pool stacks the R_s in order and Z is the one-hot source index.
/// The pooled term's gradient is scattered back to the per-source rows.
inline SourceLossResult source_loss(const std::vector<Tensor2D>& reps, const std::vector<Tensor2D>& responses,
                                    const std::vector<Tensor2D>& gammas, double lambda_e, double lambda_z) {
  const std::size_t S = reps.size();
  require(S >= 1, "source_loss: need at least one source");
  require(responses.size() == S && gammas.size() == S, "source_loss: per-source inputs disagree in count");
  SourceLossResult res;
  res.grads.resize(S);
  Index pooled_rows = 0;
  for (std::size_t s = 0; s < S; ++s) {
    require(reps[s].rows() >= 4, "source_loss: source batch " + std::to_string(s) + " has fewer than 4 rows");
    require(reps[s].cols() == reps[0].cols(), "source_loss: representation widths differ across sources");
    const ValueAndGrad suff = dcov_u_with_grad(reps[s], responses[s]);
    res.sufficiency += suff.value;
    res.grads[s] = -suff.grad;
    if (lambda_e != 0.0) {
      const ValueAndGrad gauss = energy_distance_with_grad(reps[s], gammas[s]);
      res.gaussianity += gauss.value;
      res.grads[s] += lambda_e * gauss.grad;
    }
    pooled_rows += reps[s].rows();
  }
  res.loss = -res.sufficiency + lambda_e * res.gaussianity;

  if (lambda_z != 0.0) {
    Tensor2D pooled(pooled_rows, reps[0].cols());
    Tensor2D z = Tensor2D::Zero(pooled_rows, static_cast<Index>(S));
    Index offset = 0;
    for (std::size_t s = 0; s < S; ++s) {
      pooled.middleRows(offset, reps[s].rows()) = reps[s];
      z.block(offset, static_cast<Index>(s), reps[s].rows(), 1).setOnes();
      offset += reps[s].rows();
    }
    const ValueAndGrad inv = dcov_u_with_grad(pooled, z);
    res.invariance = inv.value;
    res.loss += lambda_z * inv.value;
    offset = 0;
    for (std::size_t s = 0; s < S; ++s) {
      res.grads[s] += lambda_z * inv.grad.middleRows(offset, reps[s].rows());
      offset += reps[s].rows();
    }
  }
  return res;
}

struct TargetLossResult {
  double loss = 0.0;
  double sufficiency = 0.0;   // dcov([R_t, R_c], Y0)
  double independence = 0.0;  // dcov(R_t, R_c)
  double gaussianity = 0.0;   // energy(R_t, gamma)
  Tensor2D grad;              // d loss / d R_t
};

/// Target objective with R_c held fixed:
///   -dcov([R_t, R_c], Y0) + lambda_c * dcov(R_t, R_c) + lambda_e0 * energy(R_t, gamma)
inline TargetLossResult target_loss(const Tensor2D& rt_out, const Tensor2D& rc_out, const Tensor2D& y0,
                                    const Tensor2D& gamma, double lambda_c, double lambda_e0) {
  require(rt_out.rows() == rc_out.rows() && rt_out.rows() == y0.rows(), "target_loss: row mismatch");
  require(rt_out.rows() >= 4, "target_loss: batch has fewer than 4 rows");
  TargetLossResult res;
  const ValueAndGrad suff = dcov_u_with_grad(hconcat(rt_out, rc_out), y0);
  res.sufficiency = suff.value;
  res.grad = -suff.grad.leftCols(rt_out.cols());
  if (lambda_c != 0.0) {
    const ValueAndGrad indep = dcov_u_with_grad(rt_out, rc_out);
    res.independence = indep.value;
    res.grad += lambda_c * indep.grad;
  }
  if (lambda_e0 != 0.0) {
    const ValueAndGrad gauss = energy_distance_with_grad(rt_out, gamma);
    res.gaussianity = gauss.value;
    res.grad += lambda_e0 * gauss.grad;
  }
  res.loss = -res.sufficiency + lambda_c * res.independence + lambda_e0 * res.gaussianity;
  return res;
}

}  // namespace tesr
