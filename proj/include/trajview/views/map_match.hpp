#pragma once

#include <vector>

#include "trajview/synth/city.hpp"
#include "trajview/views/views.hpp"

namespace trajview::views {

/// Uniform-cell spatial index over road segments for nearest and radius
/// candidate queries. Exact: nearest() returns the same segment as a full
/// scan, including lowest-id tie-breaking.
class SegmentIndex {
 public:
  SegmentIndex(const synth::RoadNetwork& network, double cell_size = 150.0);

  /// Nearest segment id by perpendicular distance; ties broken by lowest id.
  int nearest(const synth::Vec2& p, double* dist_out = nullptr) const;
  /// All segments within `radius` of p, ascending id. Falls back to the
  /// single nearest segment if the radius turns up nothing.
  std::vector<int> within(const synth::Vec2& p, double radius) const;

  const synth::RoadNetwork& network() const { return *network_; }

 private:
  template <typename Visit>
  void scan_rings(const synth::Vec2& p, double stop_dist, Visit&& visit) const;
  int cell_col(double x) const;
  int cell_row(double y) const;

  const synth::RoadNetwork* network_;
  double cell_size_;
  double x0_ = 0, y0_ = 0;
  int rows_ = 0, cols_ = 0;
  std::vector<std::vector<int>> cells_;
  mutable std::vector<uint32_t> stamp_;
  mutable uint32_t stamp_gen_ = 0;
};

struct MapMatchResult {
  RouteTrajectory route;
  AssignmentMatrix assignment;
  std::vector<int> point_labels;  // per-point segment id
  bool low_confidence = false;    // adjacency-feasible path not found
};

struct MapMatchConfig {
  double sigma = 15.0;             // meters, emission scale
  double transition_penalty = 1.0; // cost for hopping to an adjacent segment
  double candidate_radius = 90.0;  // meters, Viterbi candidate search
};

/// Assigns each GPS point a road segment and collapses consecutive
/// duplicates into a route trajectory.
///
/// With a positive transition penalty this is a Viterbi decode: emission
/// cost d^2 / (2 sigma^2), transitions cost 0 on the same segment, the
/// penalty between adjacent segments, and are forbidden otherwise. A zero
/// penalty drops the adjacency constraint entirely, which reduces the
/// decode to independent per-point nearest-segment labeling. If no
/// adjacency-feasible path exists the matcher falls back to per-point
/// nearest labels and flags the result low_confidence.
MapMatchResult map_match(const synth::GpsTrajectory& traj, const SegmentIndex& index,
                         const MapMatchConfig& cfg = {});

}  // namespace trajview::views
