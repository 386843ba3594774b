#include "trajview/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "trajview/engine/optim.hpp"
#include "trajview/engine/rng.hpp"
#include "trajview/model/objectives.hpp"

namespace trajview::pipeline {

using engine::Tape;
using engine::Tensor;
using engine::Var;
using model::InputMode;
using model::MaskSet;
using model::MultiViewModel;
using model::SampleInput;

namespace {

constexpr uint64_t kValMaskStream = 0x76616cull;
constexpr uint64_t kTrainMaskStream = 0x7472696eull;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct ParamSnapshot {
  std::vector<Tensor> values;
  std::map<std::string, engine::AdamW::Moments> opt_state;
  uint64_t step_count = 0;

  static ParamSnapshot capture(MultiViewModel& m, const engine::AdamW& opt) {
    ParamSnapshot s;
    for (const auto* p : m.params().all()) s.values.push_back(p->value);
    s.opt_state = const_cast<engine::AdamW&>(opt).state();
    s.step_count = opt.step_count();
    return s;
  }
  void restore(MultiViewModel& m, engine::AdamW& opt) const {
    auto params = m.params().all();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
    opt.state() = opt_state;
    opt.set_step_count(step_count);
  }
};

struct BatchLosses {
  double align = 0, mlm = 0, total = 0;
};

// One masked forward plus both objectives on a batch of prepared inputs.
Var batch_objective(MultiViewModel& m, Tape& tape, const std::vector<SampleInput>& batch,
                    const std::vector<MaskSet>& masks, const TrainConfig& cfg, BatchLosses& out) {
  auto fwd = m.forward(tape, batch, masks);
  const auto& lc = cfg.loss_config();
  Var align = model::align_loss(tape, fwd.h_t[model::kRoute], fwd.h_t[model::kGpsRoute],
                                fwd.h_t[model::kGrid], fwd.h_t[model::kGpsGrid], lc, cfg.no_grid_view);
  Var mlm = model::mlm_loss(tape, fwd.mlm);
  const double w1 = cfg.no_align_loss ? 0.0 : cfg.w1;
  const double w2 = cfg.no_mlm_loss ? 0.0 : cfg.w2;
  Var total = model::total_loss(tape, align, mlm, w1, w2);
  out.align = tape.value(align)[0];
  out.mlm = tape.value(mlm)[0];
  out.total = tape.value(total)[0];
  return total;
}

TrainResult pretrain_loop(const TrainConfig& cfg, const views::Dataset& ds, const synth::RoadNetwork& net,
                          const std::string& checkpoint_path, const std::string& metrics_path) {
  MultiViewModel m(cfg.model_config(), net, ds.segment_vocab, ds.cell_vocab, ds.grid, ds.stats);
  engine::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const auto lc = cfg.loss_config();

  std::vector<SampleInput> train_in, val_in;
  for (const auto& s : ds.samples) {
    if (s.split == views::kTrain)
      train_in.push_back(m.build_input(s, InputMode::kPlain));
    else if (s.split == views::kVal)
      val_in.push_back(m.build_input(s, InputMode::kPlain));
  }
  if (train_in.empty()) throw std::invalid_argument("pretrain: empty train split");

  std::ofstream log;
  if (!metrics_path.empty()) {
    log.open(metrics_path);
    if (!log) throw std::runtime_error("cannot write metrics log " + metrics_path);
    log << "step,epoch,split,l_align,l_mlm,l_total\n";
  }

  // fixed validation masks, comparable across epochs
  std::vector<MaskSet> val_masks;
  val_masks.reserve(val_in.size());
  for (const auto& in : val_in)
    val_masks.push_back(m.make_masks(in, lc, engine::mix_seed({cfg.seed, kValMaskStream,
                                                               static_cast<uint64_t>(in.id)})));

  TrainResult res;
  ParamSnapshot best;
  uint64_t step = 0;
  std::vector<size_t> order(train_in.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = engine::make_rng(engine::mix_seed({cfg.seed, 0x65706f6368ull, static_cast<uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const size_t end = std::min(order.size(), at + cfg.batch_size);
      std::vector<SampleInput> batch;
      std::vector<MaskSet> masks;
      batch.reserve(end - at);
      for (size_t k = at; k < end; ++k) {
        batch.push_back(train_in[order[k]]);
        masks.push_back(m.make_masks(batch.back(), lc,
                                     engine::mix_seed({cfg.seed, kTrainMaskStream,
                                                       static_cast<uint64_t>(epoch),
                                                       static_cast<uint64_t>(batch.back().id)})));
      }
      Tape tape;
      BatchLosses losses;
      Var total = batch_objective(m, tape, batch, masks, cfg, losses);
      if (!std::isfinite(losses.total))
        throw std::runtime_error("pretrain: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batches));
      tape.backward(total);
      m.params().zero_grads();
      m.params().collect_grads(tape);
      if (!opt.step(m.params())) ++res.skipped_steps;
      ++step;
      epoch_loss += losses.total;
      ++batches;
      if (log)
        log << step << "," << epoch << ",train," << fmt(losses.align) << "," << fmt(losses.mlm) << ","
            << fmt(losses.total) << "\n";
    }
    res.epoch_train_loss.push_back(epoch_loss / std::max(1, batches));

    // validation pass, no parameter updates
    double val_loss = 0;
    int val_batches = 0;
    for (size_t at = 0; at < val_in.size(); at += cfg.batch_size) {
      const size_t end = std::min(val_in.size(), at + cfg.batch_size);
      std::vector<SampleInput> batch(val_in.begin() + at, val_in.begin() + end);
      std::vector<MaskSet> masks(val_masks.begin() + at, val_masks.begin() + end);
      Tape tape;
      BatchLosses losses;
      batch_objective(m, tape, batch, masks, cfg, losses);
      m.params().collect_grads(tape);  // discard bindings
      m.params().zero_grads();
      val_loss += losses.total;
      ++val_batches;
    }
    const double mean_val = val_batches > 0 ? val_loss / val_batches : res.epoch_train_loss.back();
    res.epoch_val_loss.push_back(mean_val);
    if (log) log << step << "," << epoch << ",val,0,0," << fmt(mean_val) << "\n";
    if (mean_val < res.best_val) {
      res.best_val = mean_val;
      res.best_epoch = epoch;
      best = ParamSnapshot::capture(m, opt);
    }
  }
  res.total_steps = step;
  if (res.best_epoch >= 0) best.restore(m, opt);
  if (!checkpoint_path.empty()) Checkpoint::save(checkpoint_path, m, cfg, &opt, res.best_epoch, res.best_val);
  return res;
}

// ---------------------------------------------------------------------------
// supervised from-scratch travel time
// ---------------------------------------------------------------------------

struct DurationScaler {
  double mean = 0, std = 1;
};

Var trajectory_vector(MultiViewModel& m, Tape& tape, MultiViewModel::Forward& fwd, size_t i) {
  std::vector<Var> parts;
  for (int a = 0; a < m.config().active_streams(); ++a) parts.push_back(tape.slice_rows(fwd.fused[i][a], 0, 1));
  return tape.concat_cols(parts);
}

TrainResult scratch_loop(const TrainConfig& cfg, const views::Dataset& ds, const synth::RoadNetwork& net,
                         const std::string& checkpoint_path, const std::string& metrics_path) {
  MultiViewModel m(cfg.model_config(), net, ds.segment_vocab, ds.cell_vocab, ds.grid, ds.stats);
  const int width = m.config().active_streams() * cfg.dim;
  m.params().create("head.w1", width, 64, engine::Init::GlorotUniform);
  m.params().create("head.b1", 1, 64, engine::Init::Zeros);
  m.params().create("head.w2", 64, 1, engine::Init::GlorotUniform);
  m.params().create("head.b2", 1, 1, engine::Init::Zeros);
  engine::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  std::vector<SampleInput> train_in, val_in;
  for (const auto& s : ds.samples) {
    // travel-time inputs are time-masked, as in the frozen-probe protocol
    if (s.split == views::kTrain)
      train_in.push_back(m.build_input(s, InputMode::kTimeMasked));
    else if (s.split == views::kVal)
      val_in.push_back(m.build_input(s, InputMode::kTimeMasked));
  }
  if (train_in.empty()) throw std::invalid_argument("scratch: empty train split");

  DurationScaler sc;
  double sum = 0, sq = 0;
  for (const auto& in : train_in) {
    sum += in.duration;
    sq += in.duration * in.duration;
  }
  sc.mean = sum / train_in.size();
  sc.std = std::sqrt(std::max(1e-9, sq / train_in.size() - sc.mean * sc.mean));

  std::ofstream log;
  if (!metrics_path.empty()) {
    log.open(metrics_path);
    if (!log) throw std::runtime_error("cannot write metrics log " + metrics_path);
    log << "step,epoch,split,mse_z,mae_s,mse_z2\n";
  }

  TrainResult res;
  ParamSnapshot best;
  uint64_t step = 0;
  std::vector<size_t> order(train_in.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  struct StepOut {
    double mse_z = 0, mae_s = 0;
  };
  auto run_batch = [&](const std::vector<SampleInput>& batch, bool train_step, StepOut& out) {
    Tape tape;
    std::vector<MaskSet> no_masks(batch.size());
    auto fwd = m.forward(tape, batch, no_masks);
    std::vector<Var> rows;
    rows.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) rows.push_back(trajectory_vector(m, tape, fwd, i));
    Var x = tape.concat_rows(rows);
    engine::ParamStore& ps = m.params();
    Var h = tape.relu(tape.linear(x, ps.bind(tape, "head.w1"), ps.bind(tape, "head.b1")));
    Var pred = tape.linear(h, ps.bind(tape, "head.w2"), ps.bind(tape, "head.b2"));  // B x 1
    Tensor target(static_cast<int>(batch.size()), 1);
    for (size_t i = 0; i < batch.size(); ++i) target.at(static_cast<int>(i), 0) = (batch[i].duration - sc.mean) / sc.std;
    Var diff = tape.sub(pred, tape.constant(target));
    Var mse = tape.mean_all(tape.mul(diff, diff));
    out.mse_z = tape.value(mse)[0];
    double mae = 0;
    for (int i = 0; i < tape.value(pred).rows(); ++i)
      mae += std::fabs(tape.value(pred).at(i, 0) * sc.std + sc.mean - batch[i].duration);
    out.mae_s = mae / batch.size();
    if (train_step) {
      if (!std::isfinite(out.mse_z)) throw std::runtime_error("scratch: non-finite loss");
      tape.backward(mse);
      ps.zero_grads();
      ps.collect_grads(tape);
      if (!opt.step(ps)) ++res.skipped_steps;
    } else {
      ps.collect_grads(tape);
      ps.zero_grads();
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = engine::make_rng(engine::mix_seed({cfg.seed, 0x73637261ull, static_cast<uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const size_t end = std::min(order.size(), at + cfg.batch_size);
      std::vector<SampleInput> batch;
      for (size_t k = at; k < end; ++k) batch.push_back(train_in[order[k]]);
      StepOut out;
      run_batch(batch, true, out);
      ++step;
      epoch_loss += out.mse_z;
      ++batches;
      if (log)
        log << step << "," << epoch << ",train," << fmt(out.mse_z) << "," << fmt(out.mae_s) << ","
            << fmt(out.mse_z) << "\n";
    }
    res.epoch_train_loss.push_back(epoch_loss / std::max(1, batches));

    double val_mae = 0;
    int val_n = 0;
    for (size_t at = 0; at < val_in.size(); at += cfg.batch_size) {
      const size_t end = std::min(val_in.size(), at + cfg.batch_size);
      std::vector<SampleInput> batch(val_in.begin() + at, val_in.begin() + end);
      StepOut out;
      run_batch(batch, false, out);
      val_mae += out.mae_s * static_cast<double>(batch.size());
      val_n += static_cast<int>(batch.size());
    }
    const double mean_val = val_n > 0 ? val_mae / val_n : res.epoch_train_loss.back();
    res.epoch_val_loss.push_back(mean_val);
    if (log) log << step << "," << epoch << ",val,0," << fmt(mean_val) << ",0\n";
    if (mean_val < res.best_val) {
      res.best_val = mean_val;
      res.best_epoch = epoch;
      best = ParamSnapshot::capture(m, opt);
    }
  }
  res.total_steps = step;
  if (res.best_epoch >= 0) best.restore(m, opt);
  if (!checkpoint_path.empty()) Checkpoint::save(checkpoint_path, m, cfg, &opt, res.best_epoch, res.best_val);
  return res;
}

}  // namespace

TrainResult run_training(const TrainConfig& config, const views::Dataset& dataset,
                         const synth::RoadNetwork& network, const std::string& checkpoint_path,
                         const std::string& metrics_path) {
  if (config.pretrain) return pretrain_loop(config, dataset, network, checkpoint_path, metrics_path);
  return scratch_loop(config, dataset, network, checkpoint_path, metrics_path);
}

}  // namespace trajview::pipeline
