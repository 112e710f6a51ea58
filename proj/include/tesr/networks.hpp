#pragma once

#include <vector>

#include "tesr/mlp.hpp"

namespace tesr {

struct MlpSpec {
  std::vector<Index> widths;  // input width first, output width last
  double slope = kLeakySlope;

  Index input_dim() const { return widths.front(); }
  Index output_dim() const { return widths.back(); }
};

/// Frozen output standardization, (out - mean) * inv_sd per column.
struct OutputNorm {
  bool enabled = false;
  RowVector mean;
  RowVector inv_sd;
};

struct MlpNet {
  MlpSpec spec;
  ParameterSet params;
  OutputNorm norm;

  Index input_dim() const { return spec.input_dim(); }
  Index output_dim() const { return spec.output_dim(); }
};

template <typename Rng>
MlpNet build_mlp(MlpSpec spec, Rng& rng) {
  require(spec.widths.size() >= 2, "build_mlp: need at least one layer");
  for (Index w : spec.widths) require(w >= 1, "build_mlp: widths must be positive");
  ParameterSet params = init_parameters(spec.widths, rng);
  return MlpNet{std::move(spec), std::move(params)};
}

/// Representation network d -> hidden... -> r. The default hidden widths give
/// d -> 64 -> 32 -> r.
template <typename Rng>
MlpNet build_rep_net(Index d, Index r, Rng& rng, const std::vector<Index>& hidden = {64, 32},
                     double slope = kLeakySlope) {
  require(d >= 1 && r >= 1, "build_rep_net: dimensions must be positive");
  MlpSpec spec;
  spec.slope = slope;
  spec.widths.push_back(d);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(r);
  return build_mlp(std::move(spec), rng);
}

/// Prediction head r_in -> 64 -> out. out is 1 for regression or a binary
/// logit, the class count for multiclass logits.
template <typename Rng>
MlpNet build_head_net(Index r_in, Index out, Rng& rng) {
  require(r_in >= 1 && out >= 1, "build_head_net: dimensions must be positive");
  return build_mlp(MlpSpec{{r_in, 64, out}, kLeakySlope}, rng);
}

inline Tensor2D rep_forward(const MlpNet& net, const Tensor2D& x) {
  Tensor2D out = mlp_predict(net.params, x, net.spec.slope);
  if (net.norm.enabled) out = (out.rowwise() - net.norm.mean).array().rowwise() * net.norm.inv_sd.array();
  return out;
}

/// Freezes the output standardization at the statistics of `x` (typically
/// the full training covariates).
inline void freeze_output_norm(MlpNet& net, const Tensor2D& x) {
  StandardizeCache cache;
  const Tensor2D h = mlp_predict(net.params, x, net.spec.slope);
  standardize_forward(h, cache);
  net.norm.enabled = true;
  net.norm.mean = h.colwise().mean();
  net.norm.inv_sd = cache.inv_sd;
}

}  // namespace tesr
