#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "tesr/tensor.hpp"

namespace tesr {

/// One affine layer: out = in * weight + bias, weight is (fan_in x fan_out).
struct Layer {
  Tensor2D weight;
  RowVector bias;
};

/// Ordered layers of a feed-forward net. The same type carries parameter
/// gradients and optimizer moments, which mirror the parameter shapes.
struct ParameterSet {
  std::vector<Layer> layers;

  std::size_t num_layers() const { return layers.size(); }

  Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

  Index num_parameters() const {
    Index total = 0;
    for (const auto& l : layers) total += l.weight.size() + l.bias.size();
    return total;
  }

  bool same_shape(const ParameterSet& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (layers[k].weight.rows() != other.layers[k].weight.rows() ||
          layers[k].weight.cols() != other.layers[k].weight.cols() ||
          layers[k].bias.size() != other.layers[k].bias.size())
        return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  /// Zero-valued set with the same shapes.
  ParameterSet zeros_like() const {
    ParameterSet z;
    z.layers.reserve(layers.size());
    for (const auto& l : layers)
      z.layers.push_back({Tensor2D::Zero(l.weight.rows(), l.weight.cols()), RowVector::Zero(l.bias.size())});
    return z;
  }

  ParameterSet& operator+=(const ParameterSet& other) {
    require(same_shape(other), "ParameterSet: shape mismatch in +=");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      layers[k].weight += other.layers[k].weight;
      layers[k].bias += other.layers[k].bias;
    }
    return *this;
  }

  /// Visits every scalar parameter in a fixed order (layer, weight row-major,
  /// then bias).
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& l : layers) {
      for (Index i = 0; i < l.weight.size(); ++i) fn(l.weight.data()[i]);
      for (Index i = 0; i < l.bias.size(); ++i) fn(l.bias.data()[i]);
    }
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& l : layers) {
      for (Index i = 0; i < l.weight.size(); ++i) fn(l.weight.data()[i]);
      for (Index i = 0; i < l.bias.size(); ++i) fn(l.bias.data()[i]);
    }
  }

  Vector flatten() const {
    Vector v(num_parameters());
    Index k = 0;
    for_each([&](double x) { v[k++] = x; });
    return v;
  }
};

/// Uniform +-sqrt(6 / fan_in) weights, zero biases. `widths` lists every layer
/// width including the input, so widths.size() - 1 layers are created.
template <typename Rng>
ParameterSet init_parameters(const std::vector<Index>& widths, Rng& rng) {
  require(widths.size() >= 2, "init_parameters: need input and output widths");
  ParameterSet p;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const Index fan_in = widths[k];
    const Index fan_out = widths[k + 1];
    require(fan_in >= 1 && fan_out >= 1, "init_parameters: widths must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Tensor2D(fan_in, fan_out), RowVector::Zero(fan_out)};
    for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline constexpr double kLeakySlope = 0.2;

/// Per-layer state recorded by mlp_forward: the input to each layer and its
/// pre-activation output.
struct ForwardCache {
  std::vector<Tensor2D> inputs;
  std::vector<Tensor2D> pre_activations;
  double slope = kLeakySlope;
};

struct ForwardResult {
  Tensor2D output;
  ForwardCache cache;
};

/// LeakyReLU between layers, none after the last.
inline ForwardResult mlp_forward(const ParameterSet& net, const Tensor2D& x, double slope = kLeakySlope) {
  require(!net.layers.empty(), "mlp_forward: empty network");
  require(x.cols() == net.input_dim(), "mlp_forward: input has " + std::to_string(x.cols()) +
                                           " columns, network expects " + std::to_string(net.input_dim()));
  ForwardResult res;
  res.cache.slope = slope;
  res.cache.inputs.reserve(net.layers.size());
  res.cache.pre_activations.reserve(net.layers.size());
  Tensor2D a = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Layer& l = net.layers[k];
    Tensor2D z = a * l.weight;
    z.rowwise() += l.bias;
    res.cache.inputs.push_back(std::move(a));
    if (k + 1 < net.layers.size()) {
      a = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    } else {
      a = z;
    }
    res.cache.pre_activations.push_back(std::move(z));
  }
  res.output = std::move(a);
  return res;
}

/// Forward pass without keeping the cache.
inline Tensor2D mlp_predict(const ParameterSet& net, const Tensor2D& x, double slope = kLeakySlope) {
  require(!net.layers.empty(), "mlp_predict: empty network");
  require(x.cols() == net.input_dim(), "mlp_predict: input width mismatch");
  Tensor2D a = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Tensor2D z = a * net.layers[k].weight;
    z.rowwise() += net.layers[k].bias;
    if (k + 1 < net.layers.size()) z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    a = std::move(z);
  }
  return a;
}

struct BackwardResult {
  ParameterSet grads;
  Tensor2D input_grad;
};

/// Reverse pass through a cached forward. The LeakyReLU derivative is 1 for a
/// strictly positive pre-activation and `slope` otherwise.
inline BackwardResult mlp_backward(const ParameterSet& net, const ForwardCache& cache, const Tensor2D& grad_output) {
  const std::size_t L = net.layers.size();
  require(cache.inputs.size() == L && cache.pre_activations.size() == L, "mlp_backward: cache does not match network");
  const Tensor2D& last = cache.pre_activations.back();
  require(grad_output.rows() == last.rows() && grad_output.cols() == last.cols(),
          "mlp_backward: grad_output is " + shape_str(grad_output) + ", expected " + shape_str(last));
  BackwardResult res;
  res.grads.layers.resize(L);
  Tensor2D delta = grad_output;
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t k = L - 1 - step;
    const Layer& l = net.layers[k];
    res.grads.layers[k].weight = cache.inputs[k].transpose() * delta;
    res.grads.layers[k].bias = delta.colwise().sum();
    Tensor2D upstream = delta * l.weight.transpose();
    if (k > 0) {
      const Tensor2D& z = cache.pre_activations[k - 1];
      const double slope = cache.slope;
      upstream = upstream.cwiseProduct(z.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
    }
    delta = std::move(upstream);
  }
  res.input_grad = std::move(delta);
  return res;
}

/// Parameter-free per-column standardization applied to a batch of network
/// outputs: y = (h - mean) / sqrt(var + eps), with batch mean and (biased)
/// variance.
struct StandardizeCache {
  RowVector inv_sd;
  Tensor2D normalized;
};

inline constexpr double kStandardizeEps = 1e-8;

inline Tensor2D standardize_forward(const Tensor2D& h, StandardizeCache& cache) {
  require(h.rows() >= 2, "standardize_forward: need at least 2 rows");
  const double n = static_cast<double>(h.rows());
  const RowVector mean = h.colwise().mean();
  Tensor2D centered = h.rowwise() - mean;
  const RowVector var = centered.array().square().colwise().sum() / n;
  cache.inv_sd = (var.array() + kStandardizeEps).rsqrt();
  cache.normalized = centered.array().rowwise() * cache.inv_sd.array();
  return cache.normalized;
}

/// d loss / d h given d loss / d y for the batch standardization above.
inline Tensor2D standardize_backward(const StandardizeCache& cache, const Tensor2D& grad) {
  const double n = static_cast<double>(grad.rows());
  const RowVector mean_g = grad.colwise().mean();
  const RowVector mean_gy = grad.cwiseProduct(cache.normalized).colwise().sum() / n;
  Tensor2D out = grad.rowwise() - mean_g;
  out.array() -= cache.normalized.array().rowwise() * mean_gy.array();
  return out.array().rowwise() * cache.inv_sd.array();
}

}  // namespace tesr
