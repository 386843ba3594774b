#include "trajview/views/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "trajview/engine/rng.hpp"

namespace trajview::views {

using nlohmann::json;

std::array<double, synth::kPoiCategories> grid_semantics(int cell_id, const std::vector<synth::Poi>& pois,
                                                         const GridSpec& spec,
                                                         const synth::FlatProjection& proj) {
  std::array<double, synth::kPoiCategories> sem{};
  int total = 0;
  for (const synth::Poi& p : pois) {
    if (spec.cell_of(proj.to_xy(p.lat, p.lon)) != cell_id) continue;
    sem[p.category] += 1.0;
    ++total;
  }
  if (total > 0)
    for (double& v : sem) v /= total;
  return sem;
}

GridDerivation derive_grid_trajectory(const synth::GpsTrajectory& traj, const GridSpec& spec,
                                      const std::vector<synth::Poi>& pois, const synth::FlatProjection& proj) {
  if (traj.points.empty()) throw std::invalid_argument("derive_grid_trajectory: empty trajectory");
  GridDerivation out;
  std::map<int, std::array<double, synth::kPoiCategories>> sem_cache;
  for (const synth::GpsPoint& p : traj.points) {
    const int cell = spec.cell_of(proj.to_xy(p.lat, p.lon));
    if (out.grid.entries.empty() || out.grid.entries.back().cell_id != cell) {
      GridEntry e;
      e.cell_id = cell;
      e.arrival_time = p.t;
      auto it = sem_cache.find(cell);
      if (it == sem_cache.end()) it = sem_cache.emplace(cell, grid_semantics(cell, pois, spec, proj)).first;
      e.sem = it->second;
      e.empty_cell = true;
      for (double v : e.sem)
        if (v != 0.0) e.empty_cell = false;
      out.grid.entries.push_back(e);
    }
    out.assignment.unit_of_point.push_back(static_cast<int>(out.grid.entries.size()) - 1);
  }
  out.assignment.unit_count = static_cast<int>(out.grid.entries.size());
  return out;
}

std::string FilterReport::to_string() const {
  std::ostringstream os;
  os << "kept=" << kept << " route_short=" << route_short << " route_long=" << route_long
     << " grid_short=" << grid_short << " grid_long=" << grid_long << " gps_short=" << gps_short
     << " gps_long=" << gps_long;
  return os.str();
}

std::vector<Sample> filter_dataset(std::vector<Sample> samples, FilterReport& report, const FilterLimits& lim) {
  std::vector<Sample> kept;
  kept.reserve(samples.size());
  report = FilterReport{};
  for (Sample& s : samples) {
    const int rl = static_cast<int>(s.route.size());
    const int gl = static_cast<int>(s.grid.size());
    const int pl = static_cast<int>(s.gps.points.size());
    bool drop = false;
    if (rl < lim.route_min) {
      report.route_short++;
      drop = true;
    } else if (rl > lim.route_max) {
      report.route_long++;
      drop = true;
    }
    if (gl < lim.grid_min) {
      report.grid_short++;
      drop = true;
    } else if (gl > lim.grid_max) {
      report.grid_long++;
      drop = true;
    }
    if (pl < lim.gps_min) {
      report.gps_short++;
      drop = true;
    } else if (pl > lim.gps_max) {
      report.gps_long++;
      drop = true;
    }
    if (!drop) kept.push_back(std::move(s));
  }
  report.kept = static_cast<int>(kept.size());
  return kept;
}

void split_dataset(std::vector<Sample>& samples, double train_frac, double val_frac, double test_frac,
                   uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || test_frac < 0)
    throw std::invalid_argument("split_dataset: negative fraction");
  if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: fractions must sum to 1");
  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rng = engine::make_rng(engine::mix_seed({seed, 0x73706c6974ull}));
  std::shuffle(order.begin(), order.end(), rng);
  const size_t n = samples.size();
  const size_t n_train = static_cast<size_t>(n * train_frac);
  const size_t n_val = static_cast<size_t>(n * val_frac);
  for (size_t i = 0; i < n; ++i) {
    int split = kTest;
    if (i < n_train)
      split = kTrain;
    else if (i < n_train + n_val)
      split = kVal;
    samples[order[i]].split = split;
  }
}

DatasetStats compute_stats(const std::vector<Sample>& samples, const synth::FlatProjection& proj) {
  DatasetStats st;
  st.x_min = st.y_min = 1e300;
  st.x_max = st.y_max = -1e300;
  double dt_sum = 0, dt_sq = 0, sp_sum = 0, sp_sq = 0, dwell_sum = 0;
  size_t dt_n = 0, dwell_n = 0;
  for (const Sample& s : samples) {
    if (s.split != kTrain) continue;
    synth::Vec2 prev{};
    for (size_t i = 0; i < s.gps.points.size(); ++i) {
      const synth::Vec2 p = proj.to_xy(s.gps.points[i].lat, s.gps.points[i].lon);
      st.x_min = std::min(st.x_min, p.x);
      st.y_min = std::min(st.y_min, p.y);
      st.x_max = std::max(st.x_max, p.x);
      st.y_max = std::max(st.y_max, p.y);
      if (i > 0) {
        const double dt = s.gps.points[i].t - s.gps.points[i - 1].t;
        const double sp = dt > 0 ? synth::dist(prev, p) / dt : 0.0;
        dt_sum += dt;
        dt_sq += dt * dt;
        sp_sum += sp;
        sp_sq += sp * sp;
        ++dt_n;
      }
      prev = p;
    }
    const double trip_end = s.gps.points.back().t;
    for (size_t i = 0; i < s.route.size(); ++i) {
      const double next = i + 1 < s.route.size() ? s.route.entries[i + 1].arrival_time : trip_end;
      dwell_sum += next - s.route.entries[i].arrival_time;
      ++dwell_n;
    }
  }
  if (dt_n > 0) {
    st.dt_mean = dt_sum / dt_n;
    st.dt_std = std::sqrt(std::max(1e-12, dt_sq / dt_n - st.dt_mean * st.dt_mean));
    st.speed_mean = sp_sum / dt_n;
    st.speed_std = std::sqrt(std::max(1e-12, sp_sq / dt_n - st.speed_mean * st.speed_mean));
  }
  if (dwell_n > 0) st.dwell_scale = std::max(1e-9, dwell_sum / dwell_n);
  if (st.x_min > st.x_max) {  // no train samples; keep a sane box
    st.x_min = st.y_min = 0;
    st.x_max = st.y_max = 1;
  }
  return st;
}

Vocab Vocab::from_ids(std::vector<int> sorted_ids) {
  Vocab v;
  v.ids = std::move(sorted_ids);
  for (size_t i = 0; i < v.ids.size(); ++i) v.index_of[v.ids[i]] = static_cast<int>(i);
  return v;
}

Vocab build_segment_vocab(const std::vector<Sample>& samples) {
  std::set<int> ids;
  for (const Sample& s : samples)
    for (const RouteEntry& e : s.route.entries) ids.insert(e.segment_id);
  return Vocab::from_ids({ids.begin(), ids.end()});
}

Vocab build_cell_vocab(const std::vector<Sample>& samples) {
  std::set<int> ids;
  for (const Sample& s : samples)
    for (const GridEntry& e : s.grid.entries) ids.insert(e.cell_id);
  return Vocab::from_ids({ids.begin(), ids.end()});
}

Dataset prepare_dataset(const synth::RoadNetwork& network, const std::vector<synth::Poi>& pois,
                        const std::vector<synth::GpsTrajectory>& trajs, const PrepOptions& opt) {
  Dataset ds;
  ds.grid = network.default_grid(opt.cell_size);
  SegmentIndex index(network);
  std::vector<Sample> samples;
  samples.reserve(trajs.size());
  for (const synth::GpsTrajectory& t : trajs) {
    Sample s;
    s.id = t.id;
    s.gps = t;
    auto match = map_match(t, index, opt.match);
    s.route = std::move(match.route);
    s.b_route = std::move(match.assignment);
    s.low_confidence = match.low_confidence;
    auto gd = derive_grid_trajectory(t, ds.grid, pois, network.proj);
    s.grid = std::move(gd.grid);
    s.b_grid = std::move(gd.assignment);
    samples.push_back(std::move(s));
  }
  ds.samples = filter_dataset(std::move(samples), ds.filter_report, opt.limits);
  split_dataset(ds.samples, opt.train_frac, opt.val_frac, opt.test_frac, opt.seed);
  ds.segment_vocab = build_segment_vocab(ds.samples);
  ds.cell_vocab = build_cell_vocab(ds.samples);
  ds.stats = compute_stats(ds.samples, network.proj);
  return ds;
}

std::vector<const Sample*> split_of(const Dataset& ds, int split) {
  std::vector<const Sample*> out;
  for (const Sample& s : ds.samples)
    if (s.split == split) out.push_back(&s);
  return out;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

json sample_to_json(const Sample& s) {
  json j;
  j["id"] = s.id;
  json pts = json::array();
  for (const auto& p : s.gps.points) pts.push_back({p.lat, p.lon, p.t});
  j["points"] = std::move(pts);
  json route = json::array();
  for (const auto& e : s.route.entries) route.push_back({e.segment_id, e.arrival_time});
  j["route"] = std::move(route);
  json grid = json::array();
  for (const auto& e : s.grid.entries) {
    json g;
    g["cell"] = e.cell_id;
    g["t"] = e.arrival_time;
    g["sem"] = e.sem;
    g["empty"] = e.empty_cell;
    grid.push_back(std::move(g));
  }
  j["grid"] = std::move(grid);
  j["b_route"] = s.b_route.unit_of_point;
  j["b_grid"] = s.b_grid.unit_of_point;
  j["low_confidence"] = s.low_confidence;
  j["split"] = s.split;
  j["truth"] = {{"segments", s.gps.truth.segment_seq},
                {"speeds", s.gps.truth.segment_speed},
                {"travel_time", s.gps.truth.travel_time},
                {"dest_cell", s.gps.truth.dest_cell},
                {"start_time", s.gps.truth.start_time}};
  return j;
}

Sample sample_from_json(const json& j) {
  Sample s;
  s.id = j.at("id").get<int64_t>();
  for (const auto& p : j.at("points"))
    s.gps.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  s.gps.id = s.id;
  for (const auto& e : j.at("route")) s.route.entries.push_back({e[0].get<int>(), e[1].get<double>()});
  for (const auto& g : j.at("grid")) {
    GridEntry e;
    e.cell_id = g.at("cell").get<int>();
    e.arrival_time = g.at("t").get<double>();
    auto sem = g.at("sem").get<std::vector<double>>();
    std::copy(sem.begin(), sem.end(), e.sem.begin());
    e.empty_cell = g.at("empty").get<bool>();
    s.grid.entries.push_back(e);
  }
  s.b_route.unit_of_point = j.at("b_route").get<std::vector<int>>();
  s.b_route.unit_count = static_cast<int>(s.route.size());
  s.b_grid.unit_of_point = j.at("b_grid").get<std::vector<int>>();
  s.b_grid.unit_count = static_cast<int>(s.grid.size());
  s.low_confidence = j.at("low_confidence").get<bool>();
  s.split = j.at("split").get<int>();
  const auto& tr = j.at("truth");
  s.gps.truth.segment_seq = tr.at("segments").get<std::vector<int>>();
  s.gps.truth.segment_speed = tr.at("speeds").get<std::vector<double>>();
  s.gps.truth.travel_time = tr.at("travel_time").get<double>();
  s.gps.truth.dest_cell = tr.at("dest_cell").get<int>();
  s.gps.truth.start_time = tr.at("start_time").get<double>();
  return s;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& views_path, const std::string& meta_path) {
  std::ofstream vf(views_path);
  if (!vf) throw std::runtime_error("cannot write " + views_path);
  for (const Sample& s : ds.samples) vf << sample_to_json(s).dump() << "\n";

  json meta;
  meta["segment_vocab"] = ds.segment_vocab.ids;
  meta["cell_vocab"] = ds.cell_vocab.ids;
  meta["grid"] = {{"x_min", ds.grid.x_min}, {"y_min", ds.grid.y_min}, {"cell_size", ds.grid.cell_size},
                  {"rows", ds.grid.rows},   {"cols", ds.grid.cols}};
  meta["stats"] = {{"x_min", ds.stats.x_min},         {"y_min", ds.stats.y_min},
                   {"x_max", ds.stats.x_max},         {"y_max", ds.stats.y_max},
                   {"dt_mean", ds.stats.dt_mean},     {"dt_std", ds.stats.dt_std},
                   {"speed_mean", ds.stats.speed_mean}, {"speed_std", ds.stats.speed_std},
                   {"dwell_scale", ds.stats.dwell_scale}};
  meta["filter"] = {{"kept", ds.filter_report.kept},
                    {"route_short", ds.filter_report.route_short},
                    {"route_long", ds.filter_report.route_long},
                    {"grid_short", ds.filter_report.grid_short},
                    {"grid_long", ds.filter_report.grid_long},
                    {"gps_short", ds.filter_report.gps_short},
                    {"gps_long", ds.filter_report.gps_long}};
  std::ofstream mf(meta_path);
  if (!mf) throw std::runtime_error("cannot write " + meta_path);
  mf << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& views_path, const std::string& meta_path) {
  Dataset ds;
  std::ifstream vf(views_path);
  if (!vf) throw std::runtime_error("cannot read " + views_path);
  std::string line;
  while (std::getline(vf, line)) {
    if (line.empty()) continue;
    ds.samples.push_back(sample_from_json(json::parse(line)));
  }
  std::ifstream mf(meta_path);
  if (!mf) throw std::runtime_error("cannot read " + meta_path);
  json meta;
  mf >> meta;
  ds.segment_vocab = Vocab::from_ids(meta.at("segment_vocab").get<std::vector<int>>());
  ds.cell_vocab = Vocab::from_ids(meta.at("cell_vocab").get<std::vector<int>>());
  const auto& g = meta.at("grid");
  ds.grid.x_min = g.at("x_min").get<double>();
  ds.grid.y_min = g.at("y_min").get<double>();
  ds.grid.cell_size = g.at("cell_size").get<double>();
  ds.grid.rows = g.at("rows").get<int>();
  ds.grid.cols = g.at("cols").get<int>();
  const auto& st = meta.at("stats");
  ds.stats.x_min = st.at("x_min").get<double>();
  ds.stats.y_min = st.at("y_min").get<double>();
  ds.stats.x_max = st.at("x_max").get<double>();
  ds.stats.y_max = st.at("y_max").get<double>();
  ds.stats.dt_mean = st.at("dt_mean").get<double>();
  ds.stats.dt_std = st.at("dt_std").get<double>();
  ds.stats.speed_mean = st.at("speed_mean").get<double>();
  ds.stats.speed_std = st.at("speed_std").get<double>();
  ds.stats.dwell_scale = st.at("dwell_scale").get<double>();
  const auto& fr = meta.at("filter");
  ds.filter_report.kept = fr.at("kept").get<int>();
  ds.filter_report.route_short = fr.at("route_short").get<int>();
  ds.filter_report.route_long = fr.at("route_long").get<int>();
  ds.filter_report.grid_short = fr.at("grid_short").get<int>();
  ds.filter_report.grid_long = fr.at("grid_long").get<int>();
  ds.filter_report.gps_short = fr.at("gps_short").get<int>();
  ds.filter_report.gps_long = fr.at("gps_long").get<int>();
  return ds;
}

}  // namespace trajview::views
