#pragma once

#include <cmath>

namespace trajview::synth {

struct Vec2 {
  double x = 0.0;  // meters east
  double y = 0.0;  // meters north
};

inline double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Local flat-earth mapping anchored at a reference latitude/longitude.
/// Meters per degree are fixed at the reference latitude; adequate for
/// cities a few kilometers across.
struct FlatProjection {
  double ref_lat = 0.0;
  double ref_lon = 0.0;

  static constexpr double kMetersPerDegLat = 111320.0;

  double meters_per_deg_lon() const { return kMetersPerDegLat * std::cos(ref_lat * M_PI / 180.0); }

  Vec2 to_xy(double lat, double lon) const {
    return {(lon - ref_lon) * meters_per_deg_lon(), (lat - ref_lat) * kMetersPerDegLat};
  }
  void to_latlon(const Vec2& p, double& lat, double& lon) const {
    lat = ref_lat + p.y / kMetersPerDegLat;
    lon = ref_lon + p.x / meters_per_deg_lon();
  }
};

/// Distance from p to the segment [a, b], and the clamped projection
/// parameter t in [0, 1].
inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, double* t_out = nullptr) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  }
  const double px = a.x + t * dx - p.x;
  const double py = a.y + t * dy - p.y;
  if (t_out) *t_out = t;
  return std::sqrt(px * px + py * py);
}

}  // namespace trajview::synth
