#include "trajview/eval/tasks.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "trajview/engine/rng.hpp"
#include "trajview/eval/metrics.hpp"

namespace trajview::eval {

using engine::Tensor;

namespace {

Tensor to_tensor(const std::vector<std::vector<double>>& rows) {
  Tensor t(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) t.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return t;
}

// deterministic 70/30 index split
void split_indices(size_t n, uint64_t seed, std::vector<int>& train, std::vector<int>& test) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = engine::make_rng(engine::mix_seed({seed, 0x7365677370ull}));
  std::shuffle(order.begin(), order.end(), rng);
  const size_t n_train = static_cast<size_t>(n * 0.7);
  train.assign(order.begin(), order.begin() + n_train);
  test.assign(order.begin() + n_train, order.end());
}

void write_predictions(const std::string& path, const std::vector<std::string>& lines, const std::string& header) {
  if (path.empty()) return;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << header << "\n";
  for (const auto& l : lines) f << l << "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::map<int, double> mean_segment_speeds(const views::Dataset& dataset) {
  std::map<int, std::pair<double, int>> acc;
  for (const views::Sample& s : dataset.samples) {
    const auto& truth = s.gps.truth;
    for (size_t k = 0; k < truth.segment_seq.size() && k < truth.segment_speed.size(); ++k) {
      auto& slot = acc[truth.segment_seq[k]];
      slot.first += truth.segment_speed[k];
      slot.second++;
    }
  }
  std::map<int, double> out;
  for (const auto& [sid, slot] : acc) out[sid] = slot.first / slot.second;
  return out;
}

TaskMetrics probe_road_label(const pipeline::SegmentTable& table, const synth::RoadNetwork& network,
                             const ProbeConfig& cfg, const std::string& predictions_csv) {
  TaskMetrics tm;
  tm.task = "road_label";
  tm.seed = cfg.seed;
  std::vector<int> labels(table.segment_ids.size());
  for (size_t i = 0; i < table.segment_ids.size(); ++i)
    labels[i] = static_cast<int>(network.segments[table.segment_ids[i]].road_type);

  std::vector<int> train, test;
  split_indices(table.segment_ids.size(), cfg.seed, train, test);
  tm.train_count = static_cast<int>(train.size());
  tm.test_count = static_cast<int>(test.size());

  auto scores = probe_classify(to_tensor(table.vectors), labels, train, 4, cfg);
  std::vector<int> truth, pred;
  std::vector<std::string> lines;
  for (int i : test) {
    truth.push_back(labels[i]);
    int arg = 0;
    for (int c = 1; c < 4; ++c)
      if (scores[i][c] > scores[i][arg]) arg = c;
    pred.push_back(arg);
    lines.push_back(std::to_string(table.segment_ids[i]) + "," + std::to_string(labels[i]) + "," +
                    std::to_string(arg));
  }
  auto f1 = f1_scores(truth, pred, 4);
  tm.values["micro_f1"] = f1.micro;
  tm.values["macro_f1"] = f1.macro;
  write_predictions(predictions_csv, lines, "segment_id,truth,pred");
  return tm;
}

TaskMetrics probe_road_speed(const pipeline::SegmentTable& table, const std::map<int, double>& speeds,
                             const ProbeConfig& cfg, const std::string& predictions_csv) {
  TaskMetrics tm;
  tm.task = "road_speed";
  tm.seed = cfg.seed;
  // keep only segments with a ground-truth mean speed
  std::vector<std::vector<double>> feats;
  std::vector<double> targets;
  std::vector<int> ids;
  for (size_t i = 0; i < table.segment_ids.size(); ++i) {
    auto it = speeds.find(table.segment_ids[i]);
    if (it == speeds.end()) {
      tm.excluded++;
      continue;
    }
    feats.push_back(table.vectors[i]);
    targets.push_back(it->second);
    ids.push_back(table.segment_ids[i]);
  }
  std::vector<int> train, test;
  split_indices(feats.size(), cfg.seed, train, test);
  tm.train_count = static_cast<int>(train.size());
  tm.test_count = static_cast<int>(test.size());

  auto preds = probe_regress(to_tensor(feats), targets, train, cfg);
  std::vector<double> truth_v, pred_v;
  std::vector<std::string> lines;
  for (int i : test) {
    truth_v.push_back(targets[i]);
    pred_v.push_back(preds[i]);
    lines.push_back(std::to_string(ids[i]) + "," + fmt(targets[i]) + "," + fmt(preds[i]));
  }
  tm.values["mae"] = mae(truth_v, pred_v);
  tm.values["rmse"] = rmse(truth_v, pred_v);
  write_predictions(predictions_csv, lines, "segment_id,truth,pred");
  return tm;
}

TaskMetrics probe_travel_time(const pipeline::TrajectoryTable& table, const ProbeConfig& cfg,
                              const std::string& predictions_csv) {
  TaskMetrics tm;
  tm.task = "travel_time";
  tm.seed = cfg.seed;
  std::vector<std::vector<double>> feats;
  std::vector<double> targets;
  std::vector<int> train, test;
  std::vector<int64_t> ids;
  for (const auto& row : table.rows) {
    const int idx = static_cast<int>(feats.size());
    feats.push_back(row.vec);
    targets.push_back(row.duration);
    ids.push_back(row.traj_id);
    if (row.split == views::kTrain)
      train.push_back(idx);
    else if (row.split == views::kTest)
      test.push_back(idx);
  }
  tm.train_count = static_cast<int>(train.size());
  tm.test_count = static_cast<int>(test.size());

  auto preds = probe_regress(to_tensor(feats), targets, train, cfg);
  std::vector<double> truth_v, pred_v;
  std::vector<std::string> lines;
  for (int i : test) {
    truth_v.push_back(targets[i]);
    pred_v.push_back(preds[i]);
    lines.push_back(std::to_string(ids[i]) + "," + fmt(targets[i]) + "," + fmt(preds[i]));
  }
  tm.values["mae"] = mae(truth_v, pred_v);
  tm.values["rmse"] = rmse(truth_v, pred_v);
  write_predictions(predictions_csv, lines, "traj_id,truth,pred");
  return tm;
}

TaskMetrics probe_destination(const pipeline::TrajectoryTable& table, const views::Vocab& cell_vocab,
                              const ProbeConfig& cfg, const std::string& predictions_csv) {
  TaskMetrics tm;
  tm.task = "destination_grid";
  tm.seed = cfg.seed;
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  std::vector<int> train, test;
  std::vector<int64_t> ids;
  for (const auto& row : table.rows) {
    const int label = cell_vocab.lookup(row.dest_label);
    if (label < 0) {
      tm.excluded++;
      continue;
    }
    const int idx = static_cast<int>(feats.size());
    feats.push_back(row.vec);
    labels.push_back(label);
    ids.push_back(row.traj_id);
    if (row.split == views::kTrain)
      train.push_back(idx);
    else if (row.split == views::kTest)
      test.push_back(idx);
  }
  tm.train_count = static_cast<int>(train.size());
  tm.test_count = static_cast<int>(test.size());

  const int n_classes = cell_vocab.size();
  auto scores = probe_classify(to_tensor(feats), labels, train, n_classes, cfg);
  std::vector<int> truth;
  std::vector<std::vector<int>> ranked;
  std::vector<std::string> lines;
  const int k = std::min(5, n_classes);
  for (int i : test) {
    truth.push_back(labels[i]);
    std::vector<int> order(n_classes);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) { return scores[i][a] > scores[i][b]; });
    ranked.push_back({order.begin(), order.begin() + k});
    lines.push_back(std::to_string(ids[i]) + "," + std::to_string(labels[i]) + "," +
                    std::to_string(order[0]));
  }
  tm.values["acc1"] = acc_at_k(truth, ranked, 1);
  tm.values["acc5"] = acc_at_k(truth, ranked, k);
  write_predictions(predictions_csv, lines, "traj_id,truth_vocab_idx,pred_vocab_idx");
  return tm;
}

pipeline::SegmentTable random_segment_table(const pipeline::SegmentTable& like, uint64_t seed) {
  pipeline::SegmentTable out;
  out.segment_ids = like.segment_ids;
  out.vectors.resize(like.vectors.size());
  auto rng = engine::make_rng(engine::mix_seed({seed, 0x726e647365ull}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t i = 0; i < like.vectors.size(); ++i) {
    out.vectors[i].resize(like.vectors[i].size());
    for (double& v : out.vectors[i]) v = gauss(rng);
  }
  return out;
}

pipeline::TrajectoryTable random_trajectory_table(const pipeline::TrajectoryTable& like, uint64_t seed) {
  pipeline::TrajectoryTable out;
  out.rows = like.rows;
  out.skipped = like.skipped;
  auto rng = engine::make_rng(engine::mix_seed({seed, 0x726e647472ull}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& row : out.rows)
    for (double& v : row.vec) v = gauss(rng);
  return out;
}

}  // namespace trajview::eval
