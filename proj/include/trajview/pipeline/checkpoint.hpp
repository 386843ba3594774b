#pragma once

#include <memory>
#include <string>

#include "trajview/engine/optim.hpp"
#include "trajview/model/model.hpp"
#include "trajview/pipeline/config.hpp"
#include "trajview/synth/city.hpp"
#include "trajview/views/dataset.hpp"

namespace trajview::pipeline {

/// Binary model snapshot: config text, vocabularies, grid, normalization
/// stats, float32 parameter table, optimizer moments, and the epoch
/// counter. Parameters live at float32 resolution during training, so a
/// save/load round trip reproduces forward passes bit-exactly.
/// Layout documented in docs/FORMATS.md.
struct Checkpoint {
  TrainConfig config;
  views::Vocab segment_vocab;
  views::Vocab cell_vocab;
  views::GridSpec grid;
  views::DatasetStats stats;
  int epoch = 0;
  double best_val = 0.0;

  static void save(const std::string& path, const model::MultiViewModel& model, const TrainConfig& cfg,
                   const engine::AdamW* opt, int epoch, double best_val);

  /// Reads the snapshot and rebuilds the model against the given network
  /// (the GAT adjacency is not stored; the network file is authoritative).
  static std::unique_ptr<model::MultiViewModel> load(const std::string& path,
                                                     const synth::RoadNetwork& network, Checkpoint* meta,
                                                     engine::AdamW* opt = nullptr);
};

}  // namespace trajview::pipeline
