#pragma once

#include <functional>

#include "tesr/mlp.hpp"

namespace tesr {

/// Central-difference gradient (L(theta + h e_k) - L(theta - h e_k)) / 2h for
/// every scalar parameter. Used as a test oracle.
inline ParameterSet finite_difference_gradient(const std::function<double(const ParameterSet&)>& loss,
                                               const ParameterSet& params, double h) {
  require(h > 0.0, "finite_difference_gradient: step must be positive");
  ParameterSet probe = params;
  ParameterSet grad = params.zeros_like();
  std::vector<double*> slots;
  probe.for_each([&](double& x) { slots.push_back(&x); });
  std::vector<double*> out;
  grad.for_each([&](double& x) { out.push_back(&x); });
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double saved = *slots[k];
    *slots[k] = saved + h;
    const double up = loss(probe);
    *slots[k] = saved - h;
    const double down = loss(probe);
    *slots[k] = saved;
    *out[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Same oracle over the entries of a plain matrix.
inline Tensor2D finite_difference_gradient(const std::function<double(const Tensor2D&)>& loss, const Tensor2D& at,
                                           double h) {
  require(h > 0.0, "finite_difference_gradient: step must be positive");
  Tensor2D probe = at;
  Tensor2D grad(at.rows(), at.cols());
  for (Index i = 0; i < at.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + h;
    const double up = loss(probe);
    probe.data()[i] = saved - h;
    const double down = loss(probe);
    probe.data()[i] = saved;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace tesr
