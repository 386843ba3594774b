#pragma once

#include <cstdint>
#include <vector>

#include "trajview/engine/tape.hpp"

namespace trajview::model {

struct LossConfig {
  double tau = 0.07;       // contrastive temperature
  double w1 = 2.0;         // alignment weight
  double w2 = 1.0;         // masked-token weight
  double mask_prob = 0.2;  // expected masked fraction target
  int mask_span = 2;
  bool symmetric_pairs = false;  // average both directions of each pair
};

/// In-batch InfoNCE over trajectory-level vectors. Row a of anchors is the
/// positive of row a of keys; the denominator runs over the whole batch,
/// positives included. Cosine similarities with a 1e-12 norm floor, scaled
/// by 1/tau, mean over anchors.
engine::Var pair_loss(engine::Tape& tape, engine::Var anchors, engine::Var keys, double tau);

/// Sum of the three directional pair terms (route, gps|route),
/// (grid, gps|grid), (gps|route, gps|grid). With no_grid_view only the
/// first pair remains.
engine::Var align_loss(engine::Tape& tape, engine::Var h_route, engine::Var h_gps_route, engine::Var h_grid,
                       engine::Var h_gps_grid, const LossConfig& cfg, bool no_grid_view = false);

/// Span mask over unit positions [0, seq_len). Scans left to right; each
/// not-yet-masked position starts a span of mask_span (clipped at the end)
/// with probability mask_prob / mask_span. Returned indices are unique and
/// ascending. Unit u sits at fusion position u + 1, so the leading
/// trajectory-level token can never be masked.
std::vector<int> make_mask(int seq_len, double mask_prob, int mask_span, uint64_t seed);

/// Same scheme, but keeps the placed (start, length) spans. Adjacent spans
/// may touch; every placed length is at most mask_span.
std::vector<std::pair<int, int>> make_mask_spans(int seq_len, double mask_prob, int mask_span, uint64_t seed);

/// One masked-prediction stream: logits over that stream's vocabulary at
/// its masked positions (row-aligned with targets).
struct MlmStream {
  engine::Var logits;        // M x V, M may be 0
  std::vector<int> targets;  // vocabulary indices
};

/// Mean softmax NLL per stream, summed over streams. Streams with no
/// masked positions contribute zero.
engine::Var mlm_loss(engine::Tape& tape, const std::vector<MlmStream>& streams);

engine::Var total_loss(engine::Tape& tape, engine::Var align, engine::Var mlm, double w1, double w2);

}  // namespace trajview::model
