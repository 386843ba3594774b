#include "trajview/pipeline/export.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace trajview::pipeline {

using engine::Tape;
using model::InputMode;
using model::MaskSet;
using model::MultiViewModel;
using model::SampleInput;

int SegmentTable::find(int segment_id) const {
  auto it = std::lower_bound(segment_ids.begin(), segment_ids.end(), segment_id);
  if (it == segment_ids.end() || *it != segment_id) return -1;
  return static_cast<int>(it - segment_ids.begin());
}

SegmentTable export_static_segment_embeddings(MultiViewModel& model, const views::Dataset& dataset,
                                              int batch_size) {
  std::map<int, std::pair<std::vector<double>, int>> acc;  // segment -> (sum, count)
  const int d = model.config().dim;

  std::vector<const views::Sample*> train = views::split_of(dataset, views::kTrain);
  std::vector<SampleInput> inputs;
  inputs.reserve(train.size());
  std::vector<const views::Sample*> kept;
  for (const views::Sample* s : train) {
    inputs.push_back(model.build_input(*s, InputMode::kPlain));
    kept.push_back(s);
  }

  for (size_t at = 0; at < inputs.size(); at += batch_size) {
    const size_t end = std::min(inputs.size(), at + batch_size);
    std::vector<SampleInput> batch(inputs.begin() + at, inputs.begin() + end);
    std::vector<MaskSet> no_masks(batch.size());
    Tape tape;
    auto fwd = model.forward(tape, batch, no_masks);
    for (size_t i = 0; i < batch.size(); ++i) {
      const views::Sample& s = *kept[at + i];
      const engine::Tensor& route_tokens = tape.value(fwd.fused[i][model::kRoute]);
      for (size_t u = 0; u < s.route.size(); ++u) {
        auto& slot = acc[s.route.entries[u].segment_id];
        if (slot.first.empty()) slot.first.assign(d, 0.0);
        for (int c = 0; c < d; ++c) slot.first[c] += route_tokens.at(static_cast<int>(u) + 1, c);
        slot.second++;
      }
    }
    model.params().collect_grads(tape);
    model.params().zero_grads();
  }

  SegmentTable table;
  for (auto& [sid, slot] : acc) {
    for (double& v : slot.first) v /= slot.second;
    table.segment_ids.push_back(sid);
    table.vectors.push_back(std::move(slot.first));
  }
  return table;
}

TrajectoryTable export_trajectory_embeddings(MultiViewModel& model, const views::Dataset& dataset,
                                             EmbeddingMode mode, int batch_size) {
  TrajectoryTable table;
  const int active = model.config().active_streams();
  const int d = model.config().dim;

  std::vector<SampleInput> inputs;
  std::vector<TrajectoryTable::Row> pending;
  for (const views::Sample& s : dataset.samples) {
    TrajectoryTable::Row row;
    row.traj_id = s.id;
    row.split = s.split;
    row.duration = s.gps.truth.travel_time;
    if (mode == EmbeddingMode::kDestinationTruncated) {
      views::Sample copy = s;
      int label = -1;
      if (!model::truncate_destination(copy, &label)) {
        table.skipped++;
        continue;
      }
      row.dest_label = label;
      inputs.push_back(model.build_input(copy, InputMode::kPlain));
    } else {
      inputs.push_back(model.build_input(
          s, mode == EmbeddingMode::kTimeMasked ? InputMode::kTimeMasked : InputMode::kPlain));
    }
    pending.push_back(std::move(row));
  }

  for (size_t at = 0; at < inputs.size(); at += batch_size) {
    const size_t end = std::min(inputs.size(), at + batch_size);
    std::vector<SampleInput> batch(inputs.begin() + at, inputs.begin() + end);
    std::vector<MaskSet> no_masks(batch.size());
    Tape tape;
    auto fwd = model.forward(tape, batch, no_masks);
    for (size_t i = 0; i < batch.size(); ++i) {
      TrajectoryTable::Row& row = pending[at + i];
      row.vec.resize(static_cast<size_t>(active) * d);
      for (int a = 0; a < active; ++a) {
        const engine::Tensor& stream = tape.value(fwd.fused[i][a]);
        for (int c = 0; c < d; ++c) row.vec[static_cast<size_t>(a) * d + c] = stream.at(0, c);
      }
    }
    model.params().collect_grads(tape);
    model.params().zero_grads();
  }
  table.rows = std::move(pending);
  return table;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void save_segment_table_csv(const SegmentTable& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "segment_id";
  for (int c = 0; c < table.dim(); ++c) f << ",v" << c;
  f << "\n";
  for (size_t i = 0; i < table.segment_ids.size(); ++i) {
    f << table.segment_ids[i];
    for (double v : table.vectors[i]) f << "," << fmt(v);
    f << "\n";
  }
}

void save_trajectory_table_csv(const TrajectoryTable& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "traj_id,split,duration,dest_label";
  for (int c = 0; c < table.dim(); ++c) f << ",v" << c;
  f << "\n";
  for (const auto& row : table.rows) {
    f << row.traj_id << "," << row.split << "," << fmt(row.duration) << "," << row.dest_label;
    for (double v : row.vec) f << "," << fmt(v);
    f << "\n";
  }
}

}  // namespace trajview::pipeline
