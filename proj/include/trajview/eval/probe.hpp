#pragma once

#include <cstdint>
#include <vector>

#include "trajview/engine/tensor.hpp"

namespace trajview::eval {

/// Frozen-feature probe head: 2-layer MLP, hidden 64, trained with AdamW.
/// Only the head trains; the feature matrix is plain data, so the backbone
/// cannot move by construction.
struct ProbeConfig {
  int hidden = 64;
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  uint64_t seed = 1;
};

/// Trains a softmax classifier head on the train rows and returns class
/// scores for every row (N x n_classes).
std::vector<std::vector<double>> probe_classify(const engine::Tensor& features,
                                                const std::vector<int>& labels,
                                                const std::vector<int>& train_idx, int n_classes,
                                                const ProbeConfig& cfg);

/// Trains a regression head (targets z-scored internally on the train rows)
/// and returns predictions for every row in original units.
std::vector<double> probe_regress(const engine::Tensor& features, const std::vector<double>& targets,
                                  const std::vector<int>& train_idx, const ProbeConfig& cfg);

}  // namespace trajview::eval
