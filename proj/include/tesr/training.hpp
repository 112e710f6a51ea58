#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "tesr/dataset.hpp"
#include "tesr/losses.hpp"
#include "tesr/networks.hpp"
#include "tesr/rmsprop.hpp"

namespace tesr {

using Rng = std::mt19937_64;

/// Tuning parameters shared by both training stages and the baselines.
struct TesrConfig {
  Index rc_dim = 32;
  Index rt_dim = 32;
  double lambda_e = 0.1;
  double lambda_z = 0.1;
  double lambda_c = 0.1;
  double lambda_e0 = 0.1;
  Index batch_size = 64;
  int epochs = 300;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::vector<Index> hidden{64, 32};
  /// Standardize representation outputs (batch statistics while training,
  /// frozen training-set statistics afterwards).
  bool standardize_output = true;

  void validate() const {
    require(rc_dim >= 1 && rt_dim >= 1, "TesrConfig: representation dimensions must be positive");
    require(batch_size >= 4, "TesrConfig: batch_size must be at least 4");
    require(epochs >= 0, "TesrConfig: epochs must be non-negative");
    require(lambda_e >= 0 && lambda_z >= 0 && lambda_c >= 0 && lambda_e0 >= 0,
            "TesrConfig: regularization weights must be non-negative");
    require(learning_rate >= 0 && weight_decay >= 0, "TesrConfig: learning rate and weight decay must be non-negative");
  }

  RmspropOptions optimizer() const {
    RmspropOptions o;
    o.learning_rate = learning_rate;
    o.weight_decay = weight_decay;
    return o;
  }
};

/// Optional instrumentation for the training loops.
struct TrainOptions {
  /// Receives the mini-batch objective of every optimizer step.
  std::vector<double>* loss_trace = nullptr;
  /// When set, called after every epoch; the network with the lowest score
  /// is returned instead of the final one.
  std::function<double(const MlpNet&)> select;
};

/// Endless stream of row indices: a fresh shuffle of [0, n) each pass.
class BatchSampler {
 public:
  BatchSampler(Index n, Rng& rng) : order_(static_cast<std::size_t>(n)), rng_(&rng) {
    require(n >= 1, "BatchSampler: empty dataset");
    std::iota(order_.begin(), order_.end(), Index{0});
    reshuffle();
  }

  std::vector<Index> next(Index batch) {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(batch));
    while (static_cast<Index>(out.size()) < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), *rng_);
    pos_ = 0;
  }

  std::vector<Index> order_;
  std::size_t pos_ = 0;
  Rng* rng_;
};

namespace detail {

class BestKeeper {
 public:
  explicit BestKeeper(const TrainOptions& opts) : opts_(opts) {}

  bool active() const { return static_cast<bool>(opts_.select); }

  void observe(const MlpNet& net) {
    if (!opts_.select) return;
    const double s = opts_.select(net);
    if (!best_ || s < best_score_) {
      best_score_ = s;
      best_ = net;
    }
  }

  MlpNet result(MlpNet last) const { return best_ ? *best_ : std::move(last); }

 private:
  const TrainOptions& opts_;
  std::optional<MlpNet> best_;
  double best_score_ = 0.0;
};

inline Index effective_batch(Index batch, Index n) { return std::min(batch, n); }

inline Index steps_per_epoch(Index n, Index batch) { return (n + batch - 1) / batch; }

}  // namespace detail

/// Evaluates the source objective of `net` on one fixed set of per-source
/// batches (no parameter update). Used for diagnostics.
inline SourceLossResult source_objective(const MlpNet& net, const std::vector<DomainDataset>& sources,
                                         const TesrConfig& cfg, Rng& rng) {
  std::vector<Tensor2D> reps, ys, gammas;
  for (const auto& s : sources) {
    reps.push_back(rep_forward(net, s.x));
    ys.push_back(response_features(s));
    gammas.push_back(gaussian_reference(s.size(), net.output_dim(), rng));
  }
  return source_loss(reps, ys, gammas, cfg.lambda_e, cfg.lambda_z);
}

/// Forward pass of a representation net on a training batch, with the
/// optional batch standardization of its outputs.
struct RepBatch {
  Tensor2D output;
  ForwardCache cache;
  StandardizeCache norm;
  bool standardized = false;
};

inline RepBatch rep_forward_train(const MlpNet& net, const Tensor2D& x, bool standardize) {
  ForwardResult fwd = mlp_forward(net.params, x, net.spec.slope);
  RepBatch b;
  b.cache = std::move(fwd.cache);
  b.standardized = standardize;
  b.output = standardize ? standardize_forward(fwd.output, b.norm) : std::move(fwd.output);
  return b;
}

inline ParameterSet rep_backward_train(const MlpNet& net, const RepBatch& batch, const Tensor2D& grad) {
  return mlp_backward(net.params, batch.cache, batch.standardized ? standardize_backward(batch.norm, grad) : grad)
      .grads;
}

namespace detail {
inline MlpNet finalize_rep(MlpNet net, const Tensor2D& x_train, const TesrConfig& cfg) {
  if (cfg.standardize_output) freeze_output_norm(net, x_train);
  return net;
}

inline Tensor2D stack_covariates(const std::vector<DomainDataset>& sets) {
  Index rows = 0;
  for (const auto& s : sets) rows += s.size();
  Tensor2D all(rows, sets.front().dim());
  Index offset = 0;
  for (const auto& s : sets) {
    all.middleRows(offset, s.size()) = s.x;
    offset += s.size();
  }
  return all;
}
}  // namespace detail

/// Stage I: learns the shared representation R_c from the source domains by
/// mini-batch RMSprop on the source objective. Each step draws one batch per
/// source; the invariance term pools exactly those batches, and output
/// standardization uses the pooled batch. An epoch is
/// ceil(min_s n_s / batch_size) steps.
inline MlpNet train_stage1(const std::vector<DomainDataset>& sources, const TesrConfig& cfg, Rng& rng,
                           const TrainOptions& opts = {}) {
  cfg.validate();
  require(!sources.empty(), "train_stage1: need at least one source");
  const Index d = sources.front().dim();
  Index min_n = sources.front().size();
  for (const auto& s : sources) {
    s.validate();
    require(s.dim() == d, "train_stage1: sources disagree on covariate dimension (" + std::to_string(s.dim()) +
                              " vs " + std::to_string(d) + ")");
    require(s.size() >= 4, "train_stage1: every source needs at least 4 rows");
    min_n = std::min(min_n, s.size());
  }
  MlpNet net = build_rep_net(d, cfg.rc_dim, rng, cfg.hidden);
  OptimizerState state(net.params, cfg.optimizer());

  std::vector<Tensor2D> responses;
  std::vector<BatchSampler> samplers;
  for (const auto& s : sources) {
    responses.push_back(response_features(s));
    samplers.emplace_back(s.size(), rng);
  }
  const Tensor2D x_all = detail::stack_covariates(sources);
  const Index batch = detail::effective_batch(cfg.batch_size, min_n);
  const Index steps = detail::steps_per_epoch(min_n, batch);
  detail::BestKeeper keeper(opts);

  const std::size_t S = sources.size();
  const Index pooled = batch * static_cast<Index>(S);
  std::vector<Tensor2D> reps(S), ys(S), gammas(S);
  Tensor2D x_batch(pooled, d);
  Tensor2D grad_pool(pooled, cfg.rc_dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Index step = 0; step < steps; ++step) {
      for (std::size_t s = 0; s < S; ++s) {
        const auto idx = samplers[s].next(batch);
        x_batch.middleRows(static_cast<Index>(s) * batch, batch) = gather_rows(sources[s].x, idx);
        ys[s] = gather_rows(responses[s], idx);
      }
      const RepBatch fwd = rep_forward_train(net, x_batch, cfg.standardize_output);
      for (std::size_t s = 0; s < S; ++s) {
        reps[s] = fwd.output.middleRows(static_cast<Index>(s) * batch, batch);
        gammas[s] = gaussian_reference(batch, cfg.rc_dim, rng);
      }
      const SourceLossResult loss = source_loss(reps, ys, gammas, cfg.lambda_e, cfg.lambda_z);
      if (opts.loss_trace) opts.loss_trace->push_back(loss.loss);
      for (std::size_t s = 0; s < S; ++s) grad_pool.middleRows(static_cast<Index>(s) * batch, batch) = loss.grads[s];
      rmsprop_step(net.params, rep_backward_train(net, fwd, grad_pool), state);
    }
    if (keeper.active()) keeper.observe(detail::finalize_rep(net, x_all, cfg));
  }
  return keeper.result(detail::finalize_rep(std::move(net), x_all, cfg));
}

/// Stage II: learns the target augmentation R_t with R_c frozen.
inline MlpNet train_stage2(const DomainDataset& target, const MlpNet& rc_net, const TesrConfig& cfg, Rng& rng,
                           const TrainOptions& opts = {}) {
  cfg.validate();
  target.validate();
  require(target.dim() == rc_net.input_dim(), "train_stage2: target covariate dimension does not match R_c input");
  require(target.size() >= 4, "train_stage2: target needs at least 4 rows");
  MlpNet net = build_rep_net(target.dim(), cfg.rt_dim, rng, cfg.hidden);
  OptimizerState state(net.params, cfg.optimizer());
  const Tensor2D rc_all = rep_forward(rc_net, target.x);
  const Tensor2D response = response_features(target);
  BatchSampler sampler(target.size(), rng);
  const Index batch = detail::effective_batch(cfg.batch_size, target.size());
  const Index steps = detail::steps_per_epoch(target.size(), batch);
  detail::BestKeeper keeper(opts);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Index step = 0; step < steps; ++step) {
      const auto idx = sampler.next(batch);
      const RepBatch fwd = rep_forward_train(net, gather_rows(target.x, idx), cfg.standardize_output);
      const Tensor2D gamma = gaussian_reference(batch, cfg.rt_dim, rng);
      const TargetLossResult loss = target_loss(fwd.output, gather_rows(rc_all, idx), gather_rows(response, idx),
                                                gamma, cfg.lambda_c, cfg.lambda_e0);
      if (opts.loss_trace) opts.loss_trace->push_back(loss.loss);
      rmsprop_step(net.params, rep_backward_train(net, fwd, loss.grad), state);
    }
    if (keeper.active()) keeper.observe(detail::finalize_rep(net, target.x, cfg));
  }
  return keeper.result(detail::finalize_rep(std::move(net), target.x, cfg));
}

/// Target-only deep dimension reduction: Stage I run on the target alone with
/// no invariance term.
inline MlpNet train_ddr(const DomainDataset& target, const TesrConfig& cfg, Rng& rng, const TrainOptions& opts = {}) {
  TesrConfig c = cfg;
  c.lambda_z = 0.0;
  return train_stage1({target}, c, rng, opts);
}

struct TesrModel {
  MlpNet rc_net;
  MlpNet rt_net;

  Index rc_dim() const { return rc_net.output_dim(); }
  Index rt_dim() const { return rt_net.output_dim(); }
};

/// Joint representation with columns [R_c(X), R_t(X)].
inline Tensor2D tesr_features(const TesrModel& model, const Tensor2D& x) {
  return hconcat(rep_forward(model.rc_net, x), rep_forward(model.rt_net, x));
}

struct SupervisedLoss {
  double loss = 0.0;
  Tensor2D grad;
};

/// Logistic loss for a single binary logit, softmax cross-entropy for
/// several logits, mean squared error for regression. All averaged over rows.
inline SupervisedLoss supervised_loss(const Tensor2D& out, const Tensor2D& y, TaskKind task) {
  require(out.rows() == y.rows() && out.rows() > 0, "supervised_loss: row mismatch");
  const double n = static_cast<double>(out.rows());
  SupervisedLoss res;
  res.grad.resize(out.rows(), out.cols());
  if (task == TaskKind::regression) {
    require(out.cols() == y.cols(), "supervised_loss: output/response width mismatch");
    const Tensor2D diff = out - y;
    const double q = static_cast<double>(out.cols());
    res.loss = diff.squaredNorm() / (n * q);
    res.grad = diff * (2.0 / (n * q));
    return res;
  }
  if (out.cols() == 1) {
    for (Index i = 0; i < out.rows(); ++i) {
      const double z = out(i, 0);
      const double t = y(i, 0);
      // log(1 + e^z) - t z, evaluated stably
      res.loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - t * z;
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      res.grad(i, 0) = (p - t) / n;
    }
    res.loss /= n;
    return res;
  }
  for (Index i = 0; i < out.rows(); ++i) {
    const int label = static_cast<int>(y(i, 0));
    require(label >= 0 && label < out.cols(), "supervised_loss: label out of range");
    const double m = out.row(i).maxCoeff();
    double denom = 0.0;
    for (Index c = 0; c < out.cols(); ++c) denom += std::exp(out(i, c) - m);
    res.loss += m + std::log(denom) - out(i, label);
    for (Index c = 0; c < out.cols(); ++c)
      res.grad(i, c) = (std::exp(out(i, c) - m) / denom - (c == label ? 1.0 : 0.0)) / n;
  }
  res.loss /= n;
  return res;
}

inline Index output_width(const DomainDataset& ds) {
  if (ds.task == TaskKind::regression) return ds.y.cols();
  return ds.num_classes <= 2 ? 1 : ds.num_classes;
}

/// Mini-batch RMSprop on a supervised loss, starting from `net`.
inline MlpNet fit_supervised(MlpNet net, const Tensor2D& x, const DomainDataset& labels, const TesrConfig& cfg,
                             Rng& rng, const TrainOptions& opts = {}) {
  cfg.validate();
  require(x.rows() == labels.size(), "fit_supervised: inputs and responses disagree in row count");
  require(x.cols() == net.input_dim(), "fit_supervised: input width does not match network");
  OptimizerState state(net.params, cfg.optimizer());
  BatchSampler sampler(x.rows(), rng);
  const Index batch = detail::effective_batch(cfg.batch_size, x.rows());
  const Index steps = detail::steps_per_epoch(x.rows(), batch);
  detail::BestKeeper keeper(opts);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Index step = 0; step < steps; ++step) {
      const auto idx = sampler.next(batch);
      ForwardResult fwd = mlp_forward(net.params, gather_rows(x, idx), net.spec.slope);
      const SupervisedLoss loss = supervised_loss(fwd.output, gather_rows(labels.y, idx), labels.task);
      if (opts.loss_trace) opts.loss_trace->push_back(loss.loss);
      rmsprop_step(net.params, mlp_backward(net.params, fwd.cache, loss.grad).grads, state);
    }
    keeper.observe(net);
  }
  return keeper.result(std::move(net));
}

/// Prediction head trained on frozen features.
inline MlpNet train_predictor(const Tensor2D& features, const DomainDataset& labels, const TesrConfig& cfg, Rng& rng,
                              const TrainOptions& opts = {}) {
  MlpNet head = build_head_net(features.cols(), output_width(labels), rng);
  return fit_supervised(std::move(head), features, labels, cfg, rng, opts);
}

/// End-to-end baseline: the representation architecture followed by the head
/// architecture, trained jointly on the target alone.
inline MlpNet train_dnn(const DomainDataset& target, const TesrConfig& cfg, Rng& rng, const TrainOptions& opts = {}) {
  target.validate();
  MlpSpec spec;
  spec.widths.push_back(target.dim());
  spec.widths.insert(spec.widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  spec.widths.push_back(cfg.rc_dim);
  spec.widths.push_back(64);
  spec.widths.push_back(output_width(target));
  MlpNet net = build_mlp(std::move(spec), rng);
  return fit_supervised(std::move(net), target.x, target, cfg, rng, opts);
}

}  // namespace tesr
