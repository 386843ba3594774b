#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajview/engine/layers.hpp"
#include "trajview/engine/params.hpp"
#include "trajview/engine/tape.hpp"
#include "trajview/model/objectives.hpp"
#include "trajview/synth/city.hpp"
#include "trajview/views/dataset.hpp"

namespace trajview::model {

/// The four token streams entering fusion: route, GPS aligned to route
/// units, grid, GPS aligned to grid cells.
enum StreamId { kRoute = 0, kGpsRoute = 1, kGrid = 2, kGpsGrid = 3, kStreamCount = 4 };
const char* stream_name(int s);

struct ModelConfig {
  int dim = 64;
  int heads = 4;
  int depth = 2;    // transformer stack depth, encoders and fusion alike
  int ff_mult = 4;  // feed-forward width multiplier
  bool no_inter_modal = false;
  bool no_grid_view = false;
  uint64_t seed = 1;

  int gru_hidden() const { return dim / 2; }
  int active_streams() const { return no_grid_view ? 2 : 4; }
};

struct TemporalFeats {
  int minute = 0;            // minute of day, [0, 1440)
  int dow = 0;               // day of week, [0, 7)
  double travel_time = 0.0;  // per-unit dwell divided by the dataset scale
  bool unknown = false;      // use the learned unknown-time vector instead
};

enum class InputMode { kPlain, kTimeMasked };

/// Everything the encoders need for one trajectory, precomputed as plain
/// tensors and index lists.
struct SampleInput {
  int64_t id = 0;
  int split = views::kTrain;
  // route view
  std::vector<int> route_rows;     // rows into the segment table (unk mapped)
  std::vector<int> route_targets;  // segment-vocab index per unit, -1 undefined
  std::vector<TemporalFeats> route_time;
  bool low_confidence = false;
  // gps view
  engine::Tensor gps_feats;  // P x 4: [x_norm, y_norm, dt_z, speed_z]
  std::vector<std::pair<int, int>> route_runs;  // (first point, count) per unit
  std::vector<std::pair<int, int>> grid_runs;
  // grid view
  std::vector<int> cell_rows;
  std::vector<int> cell_targets;
  engine::Tensor grid_sem;  // Lg x 13
  std::vector<TemporalFeats> grid_time;
  // downstream labels
  double duration = 0.0;
  int dest_cell = -1;
};

/// Masked unit indices per stream. Unit u is fusion position u + 1; the
/// leading trajectory-level token is never maskable.
struct MaskSet {
  std::array<std::vector<int>, kStreamCount> units;
};

struct EncodedView {
  engine::Var h_t;  // 1 x d trajectory-level vector
  engine::Var h_s;  // L x d token-level sequence
};

/// Multi-view trajectory encoder with cross-modal fusion and masked-token
/// prediction heads. Owns all parameters; forward passes run on a caller
/// tape so one batch is one graph.
class MultiViewModel {
 public:
  MultiViewModel(const ModelConfig& cfg, const synth::RoadNetwork& network, views::Vocab segment_vocab,
                 views::Vocab cell_vocab, views::GridSpec grid, views::DatasetStats stats);

  engine::ParamStore& params() { return store_; }
  const engine::ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const views::Vocab& segment_vocab() const { return segment_vocab_; }
  const views::Vocab& cell_vocab() const { return cell_vocab_; }
  const views::DatasetStats& stats() const { return stats_; }
  const views::GridSpec& grid() const { return grid_; }

  SampleInput build_input(const views::Sample& sample, InputMode mode) const;
  MaskSet make_masks(const SampleInput& input, const LossConfig& loss, uint64_t seed) const;

  struct Forward {
    std::vector<std::array<EncodedView, kStreamCount>> encoded;  // per sample
    std::vector<std::array<engine::Var, kStreamCount>> fused;    // (1+L) x d per stream
    std::array<engine::Var, kStreamCount> h_t;                   // B x d stacked
    std::vector<MlmStream> mlm;                                  // one per active stream
    int dropped_targets = 0;  // masked positions without a defined target
  };
  Forward forward(engine::Tape& tape, const std::vector<SampleInput>& batch,
                  const std::vector<MaskSet>& masks);

  /// Encoders only (h_t/h_s per stream), no fusion. Value-only: parameter
  /// bindings are discarded, so do not backpropagate through the result.
  std::array<EncodedView, kStreamCount> encode_sample(engine::Tape& tape, const SampleInput& input,
                                                      const MaskSet& mask);

  /// Pairwise cross-modal attention: each stream queries every other stream
  /// and sums the results (12 parameter-independent streams with all four
  /// views active). With no_inter_modal the sequences pass through.
  std::array<engine::Var, kStreamCount> inter_modal(engine::Tape& tape,
                                                    const std::array<EncodedView, kStreamCount>& enc);
  /// Shared transformer over the concatenated streams with modality-type
  /// embeddings and positions, split back at the original boundaries.
  std::array<engine::Var, kStreamCount> global_context(engine::Tape& tape,
                                                       const std::array<engine::Var, kStreamCount>& mixed);

 private:
  struct Binder;
  std::array<EncodedView, kStreamCount> encode_bound(Binder& bind, const SampleInput& input,
                                                     const MaskSet& mask, engine::Var gat_table);
  std::array<engine::Var, kStreamCount> inter_modal_bound(Binder& bind,
                                                          const std::array<EncodedView, kStreamCount>& enc);
  std::array<engine::Var, kStreamCount> global_context_bound(Binder& bind,
                                                             const std::array<engine::Var, kStreamCount>& mixed);
  engine::Var gat_pass(Binder& bind);
  engine::Var temporal_rows(Binder& bind, const std::string& prefix, const std::vector<TemporalFeats>& feats,
                            const std::vector<int>& masked_units) const;
  EncodedView encode_route(Binder& bind, const SampleInput& in, const std::vector<int>& masked,
                           engine::Var gat_table);
  EncodedView encode_gps(Binder& bind, const SampleInput& in, const std::vector<std::pair<int, int>>& runs,
                         const std::vector<int>& masked);
  EncodedView encode_grid(Binder& bind, const SampleInput& in, const std::vector<int>& masked);
  engine::Var transformer_stack(Binder& bind, const std::string& prefix, engine::Var tokens);
  std::array<engine::Var, kStreamCount> fuse_sample(Binder& bind,
                                                    const std::array<EncodedView, kStreamCount>& enc);

  void create_params();

  ModelConfig cfg_;
  synth::FlatProjection proj_;
  views::Vocab segment_vocab_;
  views::Vocab cell_vocab_;
  views::GridSpec grid_;
  views::DatasetStats stats_;
  int n_network_segments_ = 0;
  engine::Tensor adj_self_;  // segment adjacency + self loops, GAT mask
  engine::ParamStore store_;
};

/// Removes the final grid cell and everything at or after its entry
/// timestamp from every view. Returns false (sample untouched) when the
/// truncation would empty a view. The removed cell id is stored in
/// sample.gps.truth.dest_cell replacement label `label_out`.
bool truncate_destination(views::Sample& sample, int* label_out);

}  // namespace trajview::model
