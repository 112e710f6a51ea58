#pragma once

#include <cmath>
#include <vector>

#include "tesr/dataset.hpp"

namespace tesr {

/// Class decisions from network outputs: a single logit is thresholded at 0
/// (strictly positive means class 1), multiple logits take the argmax with
/// ties going to the lowest index.
inline std::vector<int> predict_classes(const Tensor2D& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    if (logits.cols() == 1) {
      out[static_cast<std::size_t>(i)] = logits(i, 0) > 0.0 ? 1 : 0;
    } else {
      Index best = 0;
      for (Index c = 1; c < logits.cols(); ++c)
        if (logits(i, c) > logits(i, best)) best = c;
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
  }
  return out;
}

inline double accuracy(const Tensor2D& logits, const Tensor2D& labels) {
  require(logits.rows() == labels.rows() && labels.rows() > 0, "accuracy: row mismatch or empty");
  const auto pred = predict_classes(logits);
  Index correct = 0;
  for (Index i = 0; i < labels.rows(); ++i)
    if (pred[static_cast<std::size_t>(i)] == static_cast<int>(labels(i, 0))) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.rows());
}

inline double mean_squared_error(const Tensor2D& pred, const Tensor2D& y) {
  require(pred.rows() == y.rows() && pred.cols() == y.cols() && y.rows() > 0, "mean_squared_error: shape mismatch");
  return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

/// Accuracy for classification, mean squared error for regression.
inline double score(const Tensor2D& outputs, const DomainDataset& test) {
  return test.task == TaskKind::classification ? accuracy(outputs, test.y) : mean_squared_error(outputs, test.y);
}

inline const char* metric_name(TaskKind task) { return task == TaskKind::classification ? "accuracy" : "mse"; }

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1 denominator)
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace tesr
