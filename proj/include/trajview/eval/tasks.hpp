#pragma once

#include <map>
#include <string>

#include "trajview/eval/probe.hpp"
#include "trajview/pipeline/export.hpp"
#include "trajview/synth/city.hpp"
#include "trajview/views/dataset.hpp"

namespace trajview::eval {

struct TaskMetrics {
  std::string task;
  std::map<std::string, double> values;
  int train_count = 0;
  int test_count = 0;
  int excluded = 0;
  uint64_t seed = 0;
};

/// Ground-truth mean realized speed per segment, from the simulator's
/// per-trip records across the whole dataset.
std::map<int, double> mean_segment_speeds(const views::Dataset& dataset);

/// Road type classification from static segment vectors (micro/macro F1).
/// Segments split 70/30 by seed; predictions_csv optional.
TaskMetrics probe_road_label(const pipeline::SegmentTable& table, const synth::RoadNetwork& network,
                             const ProbeConfig& cfg, const std::string& predictions_csv = "");

/// Mean-speed regression from static segment vectors (MAE/RMSE, m/s).
TaskMetrics probe_road_speed(const pipeline::SegmentTable& table, const std::map<int, double>& speeds,
                             const ProbeConfig& cfg, const std::string& predictions_csv = "");

/// Travel-time regression from time-masked trajectory vectors (MAE/RMSE, s).
TaskMetrics probe_travel_time(const pipeline::TrajectoryTable& table, const ProbeConfig& cfg,
                              const std::string& predictions_csv = "");

/// Destination cell classification from truncated trajectory vectors
/// (Acc@1/Acc@5 over the covered-cell vocabulary).
TaskMetrics probe_destination(const pipeline::TrajectoryTable& table, const views::Vocab& cell_vocab,
                              const ProbeConfig& cfg, const std::string& predictions_csv = "");

/// Seeded Gaussian stand-ins matching the exported widths, used as the
/// frozen-feature control in every probe.
pipeline::SegmentTable random_segment_table(const pipeline::SegmentTable& like, uint64_t seed);
pipeline::TrajectoryTable random_trajectory_table(const pipeline::TrajectoryTable& like, uint64_t seed);

}  // namespace trajview::eval
