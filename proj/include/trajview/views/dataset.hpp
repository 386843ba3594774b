#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajview/synth/city.hpp"
#include "trajview/views/map_match.hpp"
#include "trajview/views/views.hpp"

namespace trajview::views {

/// POI category frequencies of one grid cell: counts normalized to sum 1,
/// or all zeros for a cell without POIs.
std::array<double, synth::kPoiCategories> grid_semantics(int cell_id, const std::vector<synth::Poi>& pois,
                                                         const GridSpec& spec,
                                                         const synth::FlatProjection& proj);

struct GridDerivation {
  GridTrajectory grid;
  AssignmentMatrix assignment;
};

/// Collapses the traversed-cell sequence of a GPS trajectory. Out-of-box
/// points clamp to the nearest cell; consecutive duplicates merge, keeping
/// the first point's timestamp as the cell arrival time.
GridDerivation derive_grid_trajectory(const synth::GpsTrajectory& traj, const GridSpec& spec,
                                      const std::vector<synth::Poi>& pois, const synth::FlatProjection& proj);

enum Split { kTrain = 0, kVal = 1, kTest = 2 };

struct Sample {
  int64_t id = 0;
  synth::GpsTrajectory gps;
  RouteTrajectory route;
  AssignmentMatrix b_route;
  GridTrajectory grid;
  AssignmentMatrix b_grid;
  bool low_confidence = false;
  int split = kTrain;
};

struct FilterReport {
  int kept = 0;
  int route_short = 0, route_long = 0;
  int grid_short = 0, grid_long = 0;
  int gps_short = 0, gps_long = 0;
  std::string to_string() const;
};

struct FilterLimits {
  int route_min = 10, route_max = 100;
  int grid_min = 10, grid_max = 100;
  int gps_min = 10, gps_max = 256;
};

/// Drops samples whose route/grid/GPS lengths fall outside the limits.
std::vector<Sample> filter_dataset(std::vector<Sample> samples, FilterReport& report,
                                   const FilterLimits& limits = {});

/// Deterministic shuffled split; fractions must be non-negative and sum to 1.
void split_dataset(std::vector<Sample>& samples, double train_frac, double val_frac, double test_frac,
                   uint64_t seed);

/// Train-split statistics used for input feature normalization.
struct DatasetStats {
  double x_min = 0, y_min = 0, x_max = 1, y_max = 1;  // gps min-max box
  double dt_mean = 0, dt_std = 1;
  double speed_mean = 0, speed_std = 1;
  double dwell_scale = 1;  // mean per-unit dwell time, seconds
};

DatasetStats compute_stats(const std::vector<Sample>& samples, const synth::FlatProjection& proj);

/// Id maps for covered units only: segments (cells) appearing in at least
/// one kept route (grid) trajectory, ascending.
struct Vocab {
  std::vector<int> ids;            // vocab index -> unit id
  std::map<int, int> index_of;     // unit id -> vocab index

  static Vocab from_ids(std::vector<int> sorted_ids);
  int size() const { return static_cast<int>(ids.size()); }
  int lookup(int unit_id) const {  // -1 when missing
    auto it = index_of.find(unit_id);
    return it == index_of.end() ? -1 : it->second;
  }
};

struct Dataset {
  std::vector<Sample> samples;
  Vocab segment_vocab;
  Vocab cell_vocab;
  GridSpec grid;
  DatasetStats stats;
  FilterReport filter_report;
};

Vocab build_segment_vocab(const std::vector<Sample>& samples);
Vocab build_cell_vocab(const std::vector<Sample>& samples);

struct PrepOptions {
  MapMatchConfig match;
  double cell_size = 250.0;
  FilterLimits limits;
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
  uint64_t seed = 1;
};

/// Full view derivation: map matching, grid derivation, filtering, split,
/// vocabularies, and normalization statistics.
Dataset prepare_dataset(const synth::RoadNetwork& network, const std::vector<synth::Poi>& pois,
                        const std::vector<synth::GpsTrajectory>& trajs, const PrepOptions& opt);

std::vector<const Sample*> split_of(const Dataset& ds, int split);

// views.jsonl + dataset_meta.json (formats in docs/FORMATS.md)
void save_dataset(const Dataset& ds, const std::string& views_path, const std::string& meta_path);
Dataset load_dataset(const std::string& views_path, const std::string& meta_path);

}  // namespace trajview::views
