#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "trajview/model/model.hpp"
#include "trajview/model/objectives.hpp"

namespace trajview::pipeline {

/// Full training configuration. Serializes to a flat key=value text block;
/// command-line flags override file values.
struct TrainConfig {
  // model
  int dim = 64;
  int heads = 4;
  int depth = 2;
  int ff_mult = 4;
  // loss
  double tau = 0.07;
  double w1 = 2.0;
  double w2 = 1.0;
  double mask_prob = 0.2;
  int mask_span = 2;
  // optimization
  int epochs = 15;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  uint64_t seed = 1;
  // table 3 ablation switches
  bool no_inter_modal = false;
  bool no_grid_view = false;
  bool no_align_loss = false;
  bool no_mlm_loss = false;
  // pretrain (self-supervised) vs from-scratch supervised travel time
  bool pretrain = true;

  model::ModelConfig model_config() const {
    model::ModelConfig mc;
    mc.dim = dim;
    mc.heads = heads;
    mc.depth = depth;
    mc.ff_mult = ff_mult;
    mc.no_inter_modal = no_inter_modal;
    mc.no_grid_view = no_grid_view;
    mc.seed = seed;
    return mc;
  }
  model::LossConfig loss_config() const {
    model::LossConfig lc;
    lc.tau = tau;
    lc.w1 = w1;
    lc.w2 = w2;
    lc.mask_prob = mask_prob;
    lc.mask_span = mask_span;
    return lc;
  }

  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::string& path);
  /// Applies "key=value" pairs on top of this config (CLI precedence).
  void apply(const std::map<std::string, std::string>& overrides);
};

}  // namespace trajview::pipeline
