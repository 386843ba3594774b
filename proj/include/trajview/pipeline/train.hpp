#pragma once

#include <limits>
#include <string>
#include <vector>

#include "trajview/pipeline/checkpoint.hpp"
#include "trajview/pipeline/config.hpp"
#include "trajview/synth/city.hpp"
#include "trajview/views/dataset.hpp"

namespace trajview::pipeline {

struct TrainResult {
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> epoch_train_loss;  // mean total loss per epoch
  std::vector<double> epoch_val_loss;    // pretrain: total loss; scratch: mae seconds
  uint64_t total_steps = 0;
  int skipped_steps = 0;  // optimizer refusals on non-finite gradients
};

/// Self-supervised pretraining (config.pretrain == true) or end-to-end
/// supervised travel-time training from scratch (config.pretrain == false).
/// The best-validation checkpoint is written to checkpoint_path; per-step
/// and per-epoch rows go to metrics_path as CSV. Both paths may be empty
/// to skip writing.
///
/// Metrics rows: step,epoch,split,l_align,l_mlm,l_total for pretraining;
/// step,epoch,split,mse_z,mae_s,mse_z for the scratch mode.
TrainResult run_training(const TrainConfig& config, const views::Dataset& dataset,
                         const synth::RoadNetwork& network, const std::string& checkpoint_path,
                         const std::string& metrics_path);

}  // namespace trajview::pipeline
