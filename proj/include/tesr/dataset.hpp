#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tesr/tensor.hpp"

namespace tesr {

enum class TaskKind { regression, classification };

inline const char* to_string(TaskKind t) { return t == TaskKind::regression ? "regression" : "classification"; }

/// One domain's sample. For classification, `y` is an n x 1 column of integer
/// labels in [0, num_classes); for regression it holds the continuous
/// response (n x q).
struct DomainDataset {
  Tensor2D x;
  Tensor2D y;
  int domain_id = 0;
  TaskKind task = TaskKind::regression;
  int num_classes = 0;

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }

  int label(Index i) const { return static_cast<int>(y(i, 0)); }

  void validate() const {
    require(x.rows() == y.rows(), "DomainDataset: x has " + std::to_string(x.rows()) + " rows, y has " +
                                      std::to_string(y.rows()));
    require(x.allFinite() && y.allFinite(), "DomainDataset: non-finite entry");
    if (task == TaskKind::classification) {
      require(y.cols() == 1, "DomainDataset: classification labels must be a single column");
      require(num_classes >= 2, "DomainDataset: classification needs at least 2 classes");
      for (Index i = 0; i < y.rows(); ++i) {
        const double v = y(i, 0);
        require(v == std::floor(v) && v >= 0 && v < num_classes,
                "DomainDataset: label out of range at row " + std::to_string(i));
      }
    }
  }

  DomainDataset subset(const std::vector<Index>& rows) const {
    DomainDataset out;
    out.x = gather_rows(x, rows);
    out.y = gather_rows(y, rows);
    out.domain_id = domain_id;
    out.task = task;
    out.num_classes = num_classes;
    return out;
  }
};

inline Tensor2D one_hot(const std::vector<int>& labels, int num_classes) {
  Tensor2D z = Tensor2D::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, "one_hot: label out of range");
    z(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return z;
}

/// The response as it enters a distance covariance: continuous responses and
/// binary {0,1} labels as-is, multiclass labels one-hot.
inline Tensor2D response_features(const Tensor2D& y, TaskKind task, int num_classes) {
  if (task == TaskKind::regression || num_classes <= 2) return y;
  std::vector<int> labels(static_cast<std::size_t>(y.rows()));
  for (Index i = 0; i < y.rows(); ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(y(i, 0));
  return one_hot(labels, num_classes);
}

inline Tensor2D response_features(const DomainDataset& ds) { return response_features(ds.y, ds.task, ds.num_classes); }

}  // namespace tesr
