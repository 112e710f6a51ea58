#pragma once

#include <cmath>

#include "tesr/mlp.hpp"

namespace tesr {

struct RmspropOptions {
  double learning_rate = 1e-3;
  double decay = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Running squared-gradient averages, shaped like the parameters they track.
struct OptimizerState {
  ParameterSet square_avg;
  long step = 0;
  RmspropOptions options;

  OptimizerState() = default;
  OptimizerState(const ParameterSet& params, RmspropOptions opts)
      : square_avg(params.zeros_like()), options(opts) {}
};

/// One RMSprop update, in place. Weight decay is folded into the gradient
/// before the squared average is updated:
///   g' = g + wd * theta,  v <- rho v + (1 - rho) g'^2,  theta <- theta - lr g' / (sqrt(v) + eps)
inline void rmsprop_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state) {
  require(params.same_shape(grads), "rmsprop_step: gradient shape mismatch");
  require(params.same_shape(state.square_avg), "rmsprop_step: optimizer state shape mismatch");
  require(grads.all_finite(), "rmsprop_step: non-finite gradient");
  const RmspropOptions& o = state.options;
  auto update = [&o](double* theta, const double* g, double* v, Index n) {
    for (Index i = 0; i < n; ++i) {
      const double gi = g[i] + o.weight_decay * theta[i];
      v[i] = o.decay * v[i] + (1.0 - o.decay) * gi * gi;
      theta[i] -= o.learning_rate * gi / (std::sqrt(v[i]) + o.epsilon);
    }
  };
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    Layer& p = params.layers[k];
    const Layer& g = grads.layers[k];
    Layer& v = state.square_avg.layers[k];
    update(p.weight.data(), g.weight.data(), v.weight.data(), p.weight.size());
    update(p.bias.data(), g.bias.data(), v.bias.data(), p.bias.size());
  }
  ++state.step;
}

}  // namespace tesr
