#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "trajview/synth/city.hpp"
#include "trajview/views/grid.hpp"

namespace trajview::views {

struct RouteEntry {
  int segment_id = -1;
  double arrival_time = 0.0;  // timestamp of the first point on this segment
};

struct RouteTrajectory {
  std::vector<RouteEntry> entries;
  size_t size() const { return entries.size(); }
};

struct GridEntry {
  int cell_id = -1;
  std::array<double, synth::kPoiCategories> sem{};  // category frequencies, unit-sum or all-zero
  bool empty_cell = false;
  double arrival_time = 0.0;
};

struct GridTrajectory {
  std::vector<GridEntry> entries;
  size_t size() const { return entries.size(); }
};

/// Binary row-stochastic assignment of GPS points to collapsed units
/// (route segments or grid cells). Row i has its single 1 in column
/// unit_of_point[i]; columns are ordered exactly like the collapsed
/// trajectory entries, so unit_of_point is non-decreasing.
struct AssignmentMatrix {
  std::vector<int> unit_of_point;
  int unit_count = 0;

  size_t rows() const { return unit_of_point.size(); }
  /// Maximal runs of points per unit: (first_point, count) per column.
  std::vector<std::pair<int, int>> runs() const {
    std::vector<std::pair<int, int>> out;
    for (size_t i = 0; i < unit_of_point.size(); ++i) {
      if (out.empty() || unit_of_point[i] != static_cast<int>(out.size()) - 1) out.push_back({static_cast<int>(i), 0});
      out.back().second++;
    }
    return out;
  }
};

}  // namespace trajview::views
