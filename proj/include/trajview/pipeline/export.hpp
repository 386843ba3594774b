#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajview/model/model.hpp"
#include "trajview/views/dataset.hpp"

namespace trajview::pipeline {

/// Static per-segment vectors: the fused route-stream token of each segment
/// averaged across every occurrence in the train split.
struct SegmentTable {
  std::vector<int> segment_ids;               // ascending
  std::vector<std::vector<double>> vectors;   // aligned with segment_ids
  int dim() const { return vectors.empty() ? 0 : static_cast<int>(vectors[0].size()); }
  int find(int segment_id) const;             // index or -1
};

enum class EmbeddingMode { kFull, kTimeMasked, kDestinationTruncated };

/// Per-trajectory vectors: the fused trajectory-level tokens of the active
/// streams concatenated (width = active_streams * dim).
struct TrajectoryTable {
  struct Row {
    int64_t traj_id = 0;
    int split = views::kTrain;
    double duration = 0.0;  // ground-truth seconds
    int dest_label = -1;    // destination-truncated mode: the removed cell id
    std::vector<double> vec;
  };
  std::vector<Row> rows;
  int skipped = 0;  // truncation emptied a view
  int dim() const { return rows.empty() ? 0 : static_cast<int>(rows[0].vec.size()); }
};

SegmentTable export_static_segment_embeddings(model::MultiViewModel& model, const views::Dataset& dataset,
                                              int batch_size = 32);

TrajectoryTable export_trajectory_embeddings(model::MultiViewModel& model, const views::Dataset& dataset,
                                             EmbeddingMode mode, int batch_size = 32);

void save_segment_table_csv(const SegmentTable& table, const std::string& path);
void save_trajectory_table_csv(const TrajectoryTable& table, const std::string& path);

}  // namespace trajview::pipeline
