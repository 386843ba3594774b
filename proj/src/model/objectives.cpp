#include "trajview/model/objectives.hpp"

#include <stdexcept>

#include "trajview/engine/rng.hpp"

namespace trajview::model {

using engine::Tape;
using engine::Var;

Var pair_loss(Tape& tape, Var anchors, Var keys, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("pair_loss: tau must be positive");
  const int batch = tape.value(anchors).rows();
  if (batch != tape.value(keys).rows())
    throw std::invalid_argument("pair_loss: batch mismatch " + tape.value(anchors).shape_str() + " vs " +
                                tape.value(keys).shape_str());
  Var sims = tape.matmul_nt(tape.normalize_rows(anchors), tape.normalize_rows(keys));
  std::vector<int> diag(batch);
  for (int i = 0; i < batch; ++i) diag[i] = i;
  return tape.softmax_xent_rows(tape.scale(sims, 1.0 / tau), diag);
}

namespace {

Var directed_pair(Tape& tape, Var a, Var b, const LossConfig& cfg) {
  Var f = pair_loss(tape, a, b, cfg.tau);
  if (!cfg.symmetric_pairs) return f;
  return tape.scale(tape.add(f, pair_loss(tape, b, a, cfg.tau)), 0.5);
}

}  // namespace

Var align_loss(Tape& tape, Var h_route, Var h_gps_route, Var h_grid, Var h_gps_grid, const LossConfig& cfg,
               bool no_grid_view) {
  Var loss = directed_pair(tape, h_route, h_gps_route, cfg);
  if (no_grid_view) return loss;
  loss = tape.add(loss, directed_pair(tape, h_grid, h_gps_grid, cfg));
  loss = tape.add(loss, directed_pair(tape, h_gps_route, h_gps_grid, cfg));
  return loss;
}

std::vector<std::pair<int, int>> make_mask_spans(int seq_len, double mask_prob, int mask_span, uint64_t seed) {
  if (seq_len < 1) throw std::invalid_argument("make_mask: seq_len must be >= 1");
  if (mask_span < 1) throw std::invalid_argument("make_mask: mask_span must be >= 1");
  if (mask_prob < 0.0 || mask_prob >= 1.0) throw std::invalid_argument("make_mask: mask_prob must be in [0,1)");
  std::vector<std::pair<int, int>> spans;
  if (mask_prob == 0.0) return spans;
  auto rng = engine::make_rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double start_rate = mask_prob / mask_span;
  for (int i = 0; i < seq_len;) {
    if (u(rng) < start_rate) {
      const int len = std::min(mask_span, seq_len - i);
      spans.push_back({i, len});
      i += len;
    } else {
      ++i;
    }
  }
  return spans;
}

std::vector<int> make_mask(int seq_len, double mask_prob, int mask_span, uint64_t seed) {
  std::vector<int> out;
  for (const auto& [start, len] : make_mask_spans(seq_len, mask_prob, mask_span, seed))
    for (int i = 0; i < len; ++i) out.push_back(start + i);
  return out;
}

Var mlm_loss(Tape& tape, const std::vector<MlmStream>& streams) {
  Var total = tape.constant(engine::Tensor::scalar(0.0));
  for (const MlmStream& s : streams) {
    if (s.targets.empty()) continue;
    if (tape.value(s.logits).rows() != static_cast<int>(s.targets.size()))
      throw std::invalid_argument("mlm_loss: logits rows do not match targets");
    total = tape.add(total, tape.softmax_xent_rows(s.logits, s.targets));
  }
  return total;
}

Var total_loss(Tape& tape, Var align, Var mlm, double w1, double w2) {
  if (w1 < 0.0 || w2 < 0.0) throw std::invalid_argument("total_loss: weights must be non-negative");
  return tape.add(tape.scale(align, w1), tape.scale(mlm, w2));
}

}  // namespace trajview::model
