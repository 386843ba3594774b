#pragma once

#include <vector>

#include "trajview/synth/geo.hpp"

namespace trajview::views {

/// Uniform, non-overlapping grid over a bounding box (local xy meters).
/// Cells are indexed row-major: cell = row * cols + col, rows along y.
/// Points outside the box clamp to the nearest cell; the max edge belongs
/// to the last row/column.
struct GridSpec {
  double x_min = 0.0;
  double y_min = 0.0;
  double cell_size = 250.0;
  int rows = 1;
  int cols = 1;

  static GridSpec cover(double x_min, double y_min, double x_max, double y_max, double cell_size);

  int cell_of(const synth::Vec2& p) const {
    int col = static_cast<int>((p.x - x_min) / cell_size);
    int row = static_cast<int>((p.y - y_min) / cell_size);
    if (p.x < x_min) col = 0;
    if (p.y < y_min) row = 0;
    if (col >= cols) col = cols - 1;
    if (row >= rows) row = rows - 1;
    return row * cols + col;
  }
  int cell_count() const { return rows * cols; }
};

inline GridSpec GridSpec::cover(double x_min, double y_min, double x_max, double y_max, double cell_size) {
  GridSpec g;
  g.x_min = x_min;
  g.y_min = y_min;
  g.cell_size = cell_size;
  g.cols = std::max(1, static_cast<int>(std::ceil((x_max - x_min) / cell_size)));
  g.rows = std::max(1, static_cast<int>(std::ceil((y_max - y_min) / cell_size)));
  return g;
}

}  // namespace trajview::views
