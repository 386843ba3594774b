#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajview/synth/geo.hpp"
#include "trajview/views/grid.hpp"

namespace trajview::synth {

enum class RoadType : int { Primary = 0, Secondary = 1, Tertiary = 2, Residential = 3 };

const char* road_type_name(RoadType t);
RoadType road_type_from_name(const std::string& s);
double free_speed_for(RoadType t);  // m/s

struct Segment {
  int id = 0;
  int node_a = 0;  // intersection indices
  int node_b = 0;
  double lat1 = 0, lon1 = 0, lat2 = 0, lon2 = 0;
  RoadType road_type = RoadType::Residential;
  double length = 0.0;      // meters
  double free_speed = 0.0;  // m/s
};

struct RoadNetwork {
  FlatProjection proj;
  int lattice_rows = 0;
  int lattice_cols = 0;
  std::vector<Vec2> nodes;                    // intersections, xy meters
  std::vector<Segment> segments;
  std::vector<std::vector<int>> neighbors;    // N(v): segments sharing an intersection
  std::vector<std::vector<int>> node_segments;  // incident segments per node

  size_t size() const { return segments.size(); }
  bool adjacent(int a, int b) const;
  Vec2 endpoint_a(int seg) const { return nodes[segments[seg].node_a]; }
  Vec2 endpoint_b(int seg) const { return nodes[segments[seg].node_b]; }
  void bounding_box(double& x_min, double& y_min, double& x_max, double& y_max) const;
  views::GridSpec default_grid(double cell_size) const;
};

struct Poi {
  double lat = 0, lon = 0;
  int category = 0;  // [0, 13)
};
inline constexpr int kPoiCategories = 13;

struct GpsPoint {
  double lat = 0, lon = 0;
  double t = 0;  // seconds
};

struct TrajectoryTruth {
  std::vector<int> segment_seq;      // path segment ids in traversal order
  std::vector<double> segment_speed; // realized speed per path segment, m/s
  std::vector<int> point_segment;    // true segment per GPS point
  double travel_time = 0.0;          // seconds
  int dest_cell = -1;                // under the generator's default grid
  double dest_lat = 0, dest_lon = 0;
  int origin_node = -1, dest_node = -1;
  double start_time = 0.0;           // seconds since epoch 0
};

struct GpsTrajectory {
  int64_t id = 0;
  std::vector<GpsPoint> points;
  TrajectoryTruth truth;
};

/// Connected lattice city. Every lattice edge becomes one segment; a
/// drop_rate fraction of removable edges is deleted while keeping all
/// remaining segments mutually reachable. Road types descend by ring from
/// the boundary: primary on the outer ring, then secondary, tertiary, and
/// residential inside.
RoadNetwork generate_road_network(uint64_t seed, int rows, int cols, double drop_rate,
                                  double spacing_m = 200.0, double ref_lat = 30.0, double ref_lon = 104.0);

/// POIs in vertical functional zones. Zone z concentrates on category
/// (z mod 13) with the configured weight; remaining mass is uniform.
std::vector<Poi> generate_pois(const RoadNetwork& network, uint64_t seed, int zone_count,
                               int pois_per_zone = 40, double concentration = 0.75);

struct SimulateConfig {
  double sample_period = 5.0;   // seconds between GPS fixes
  double noise_sigma = 10.0;    // meters, isotropic positional noise
  double speed_noise_sigma = 0.1;  // lognormal sigma on per-segment speed
  int min_od_blocks = 12;       // minimum |dr|+|dc| between origin/destination
  double grid_cell_size = 250.0;  // for the recorded destination cell
  double time_window_days = 15.0;  // start times sampled uniformly in this window
};

/// Trips between random intersections along the fastest path, sampled at a
/// fixed period with Gaussian positional noise. Ground truth (segments,
/// speeds, duration, destination cell) is recorded alongside each trip.
std::vector<GpsTrajectory> simulate_trajectories(const RoadNetwork& network, uint64_t seed, int n,
                                                 const SimulateConfig& cfg = {});

// --- file formats (documented in docs/FORMATS.md) ---
void save_network_json(const RoadNetwork& network, const std::string& path);
RoadNetwork load_network_json(const std::string& path);
void save_pois_csv(const std::vector<Poi>& pois, const std::string& path);
std::vector<Poi> load_pois_csv(const std::string& path);
void save_trajectories_jsonl(const std::vector<GpsTrajectory>& trajs, const std::string& path);
std::vector<GpsTrajectory> load_trajectories_jsonl(const std::string& path);

}  // namespace trajview::synth
