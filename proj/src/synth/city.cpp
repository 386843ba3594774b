#include "trajview/synth/city.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "trajview/engine/rng.hpp"

namespace trajview::synth {

using engine::mix_seed;
using nlohmann::json;

const char* road_type_name(RoadType t) {
  switch (t) {
    case RoadType::Primary: return "primary";
    case RoadType::Secondary: return "secondary";
    case RoadType::Tertiary: return "tertiary";
    case RoadType::Residential: return "residential";
  }
  return "residential";
}

RoadType road_type_from_name(const std::string& s) {
  if (s == "primary") return RoadType::Primary;
  if (s == "secondary") return RoadType::Secondary;
  if (s == "tertiary") return RoadType::Tertiary;
  if (s == "residential") return RoadType::Residential;
  throw std::invalid_argument("unknown road type: " + s);
}

double free_speed_for(RoadType t) {
  switch (t) {
    case RoadType::Primary: return 16.0;
    case RoadType::Secondary: return 12.0;
    case RoadType::Tertiary: return 9.0;
    case RoadType::Residential: return 6.0;
  }
  return 6.0;
}

bool RoadNetwork::adjacent(int a, int b) const {
  if (a == b) return false;
  for (int u : neighbors[a])
    if (u == b) return true;
  return false;
}

void RoadNetwork::bounding_box(double& x_min, double& y_min, double& x_max, double& y_max) const {
  x_min = y_min = 1e300;
  x_max = y_max = -1e300;
  for (const Vec2& p : nodes) {
    x_min = std::min(x_min, p.x);
    y_min = std::min(y_min, p.y);
    x_max = std::max(x_max, p.x);
    y_max = std::max(y_max, p.y);
  }
}

views::GridSpec RoadNetwork::default_grid(double cell_size) const {
  double x0, y0, x1, y1;
  bounding_box(x0, y0, x1, y1);
  return views::GridSpec::cover(x0, y0, x1, y1, cell_size);
}

namespace {

struct LatticeEdge {
  int a, b;      // node indices
  int band;      // ring distance from the boundary
};

// Edges form one connected component: BFS over nodes through live edges must
// reach every live edge's endpoints.
bool edges_connected(int node_count, const std::vector<LatticeEdge>& edges, const std::vector<bool>& alive) {
  std::vector<std::vector<int>> adj(node_count);
  int first = -1;
  int live = 0;
  for (size_t e = 0; e < edges.size(); ++e) {
    if (!alive[e]) continue;
    ++live;
    adj[edges[e].a].push_back(edges[e].b);
    adj[edges[e].b].push_back(edges[e].a);
    if (first < 0) first = edges[e].a;
  }
  if (live == 0) return false;
  std::vector<bool> seen(node_count, false);
  std::queue<int> q;
  q.push(first);
  seen[first] = true;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int u : adj[v])
      if (!seen[u]) {
        seen[u] = true;
        q.push(u);
      }
  }
  for (size_t e = 0; e < edges.size(); ++e)
    if (alive[e] && (!seen[edges[e].a] || !seen[edges[e].b])) return false;
  return true;
}

void rebuild_topology(RoadNetwork& net) {
  net.node_segments.assign(net.nodes.size(), {});
  for (const Segment& s : net.segments) {
    net.node_segments[s.node_a].push_back(s.id);
    net.node_segments[s.node_b].push_back(s.id);
  }
  net.neighbors.assign(net.segments.size(), {});
  for (const auto& incident : net.node_segments) {
    for (int a : incident)
      for (int b : incident) {
        if (a == b) continue;
        auto& n = net.neighbors[a];
        if (std::find(n.begin(), n.end(), b) == n.end()) n.push_back(b);
      }
  }
  for (auto& n : net.neighbors) std::sort(n.begin(), n.end());
}

}  // namespace

RoadNetwork generate_road_network(uint64_t seed, int rows, int cols, double drop_rate, double spacing_m,
                                  double ref_lat, double ref_lon) {
  if (rows < 2 || cols < 2) throw std::invalid_argument("generate_road_network: rows and cols must be >= 2");
  if (drop_rate < 0.0 || drop_rate >= 0.5)
    throw std::invalid_argument("generate_road_network: drop_rate must be in [0, 0.5)");

  RoadNetwork net;
  net.proj = FlatProjection{ref_lat, ref_lon};
  net.lattice_rows = rows;
  net.lattice_cols = cols;
  net.nodes.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) net.nodes.push_back({c * spacing_m, r * spacing_m});

  auto node_id = [cols](int r, int c) { return r * cols + c; };
  auto ring = [&](int r, int c) { return std::min(std::min(r, rows - 1 - r), std::min(c, cols - 1 - c)); };

  std::vector<LatticeEdge> edges;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c)
      edges.push_back({node_id(r, c), node_id(r, c + 1), std::min(ring(r, c), ring(r, c + 1))});
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c < cols; ++c)
      edges.push_back({node_id(r, c), node_id(r + 1, c), std::min(ring(r, c), ring(r + 1, c))});

  // Drop edges whose removal keeps the remaining edge set connected.
  std::vector<bool> alive(edges.size(), true);
  const int target = static_cast<int>(drop_rate * edges.size());
  std::vector<size_t> order(edges.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rng = engine::make_rng(mix_seed({seed, 0x63697479ull}));
  std::shuffle(order.begin(), order.end(), rng);
  int dropped = 0;
  for (size_t e : order) {
    if (dropped >= target) break;
    alive[e] = false;
    if (edges_connected(static_cast<int>(net.nodes.size()), edges, alive)) {
      ++dropped;
    } else {
      alive[e] = true;
    }
  }

  int id = 0;
  for (size_t e = 0; e < edges.size(); ++e) {
    if (!alive[e]) continue;
    Segment s;
    s.id = id++;
    s.node_a = edges[e].a;
    s.node_b = edges[e].b;
    const Vec2 pa = net.nodes[s.node_a];
    const Vec2 pb = net.nodes[s.node_b];
    net.proj.to_latlon(pa, s.lat1, s.lon1);
    net.proj.to_latlon(pb, s.lat2, s.lon2);
    s.length = dist(pa, pb);
    s.road_type = static_cast<RoadType>(std::min(edges[e].band, 3));
    s.free_speed = free_speed_for(s.road_type);
    net.segments.push_back(s);
  }
  rebuild_topology(net);
  return net;
}

std::vector<Poi> generate_pois(const RoadNetwork& network, uint64_t seed, int zone_count, int pois_per_zone,
                               double concentration) {
  if (zone_count < 1) throw std::invalid_argument("generate_pois: zone_count must be >= 1");
  if (pois_per_zone < 1) throw std::invalid_argument("generate_pois: pois_per_zone must be >= 1");
  double x0, y0, x1, y1;
  network.bounding_box(x0, y0, x1, y1);
  const double strip = (x1 - x0) / zone_count;

  std::vector<Poi> pois;
  pois.reserve(static_cast<size_t>(zone_count) * pois_per_zone);
  for (int z = 0; z < zone_count; ++z) {
    auto rng = engine::make_rng(mix_seed({seed, 0x706f6973ull, static_cast<uint64_t>(z)}));
    std::uniform_real_distribution<double> ux(x0 + z * strip, x0 + (z + 1) * strip);
    std::uniform_real_distribution<double> uy(y0, y1);
    std::uniform_real_distribution<double> ucat(0.0, 1.0);
    const int focus = z % kPoiCategories;
    for (int i = 0; i < pois_per_zone; ++i) {
      Poi p;
      double lat, lon;
      network.proj.to_latlon({ux(rng), uy(rng)}, lat, lon);
      p.lat = lat;
      p.lon = lon;
      const double u = ucat(rng);
      if (u < concentration) {
        p.category = focus;
      } else {
        // spread the rest uniformly over the other 12 categories
        int k = static_cast<int>((u - concentration) / (1.0 - concentration) * (kPoiCategories - 1));
        k = std::min(k, kPoiCategories - 2);
        p.category = k >= focus ? k + 1 : k;
      }
      pois.push_back(p);
    }
  }
  return pois;
}

namespace {

// Fastest path between intersections under free-flow speeds.
std::vector<int> dijkstra_path(const RoadNetwork& net, int from, int to) {
  const size_t n = net.nodes.size();
  std::vector<double> cost(n, 1e300);
  std::vector<int> via_seg(n, -1), prev(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  cost[from] = 0.0;
  heap.push({0.0, from});
  while (!heap.empty()) {
    auto [c, v] = heap.top();
    heap.pop();
    if (c > cost[v]) continue;
    if (v == to) break;
    for (int sid : net.node_segments[v]) {
      const Segment& s = net.segments[sid];
      const int u = s.node_a == v ? s.node_b : s.node_a;
      const double nc = c + s.length / s.free_speed;
      if (nc < cost[u]) {
        cost[u] = nc;
        via_seg[u] = sid;
        prev[u] = v;
        heap.push({nc, u});
      }
    }
  }
  if (cost[to] >= 1e300) return {};
  std::vector<int> path;
  for (int v = to; v != from; v = prev[v]) path.push_back(via_seg[v]);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

std::vector<GpsTrajectory> simulate_trajectories(const RoadNetwork& network, uint64_t seed, int n,
                                                 const SimulateConfig& cfg) {
  if (n < 1) throw std::invalid_argument("simulate_trajectories: n must be >= 1");
  if (cfg.sample_period <= 0.0) throw std::invalid_argument("simulate_trajectories: sample_period must be > 0");
  if (cfg.noise_sigma < 0.0) throw std::invalid_argument("simulate_trajectories: noise_sigma must be >= 0");

  const views::GridSpec grid = network.default_grid(cfg.grid_cell_size);
  const int node_count = static_cast<int>(network.nodes.size());
  std::vector<int> node_r(node_count), node_c(node_count);
  for (int i = 0; i < node_count; ++i) {
    node_r[i] = i / network.lattice_cols;
    node_c[i] = i % network.lattice_cols;
  }
  const int max_blocks = (network.lattice_rows - 1) + (network.lattice_cols - 1);
  const int min_blocks = std::min(cfg.min_od_blocks, std::max(1, max_blocks - 1));

  std::vector<GpsTrajectory> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto rng = engine::make_rng(mix_seed({seed, 0x74726970ull, static_cast<uint64_t>(i)}));
    std::uniform_int_distribution<int> unode(0, node_count - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);

    int a = 0, b = 0;
    std::vector<int> path;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      a = unode(rng);
      b = unode(rng);
      if (a == b) continue;
      if (std::abs(node_r[a] - node_r[b]) + std::abs(node_c[a] - node_c[b]) < min_blocks) continue;
      if (network.node_segments[a].empty() || network.node_segments[b].empty()) continue;
      path = dijkstra_path(network, a, b);
      if (!path.empty()) break;
    }
    if (path.empty()) throw std::runtime_error("simulate_trajectories: could not sample an od pair with a path");

    GpsTrajectory traj;
    traj.id = i;
    traj.truth.origin_node = a;
    traj.truth.dest_node = b;
    traj.truth.segment_seq = path;

    // per-segment realized speeds and cumulative arrival times
    std::vector<double> cum(path.size() + 1, 0.0);
    traj.truth.segment_speed.reserve(path.size());
    for (size_t k = 0; k < path.size(); ++k) {
      const Segment& s = network.segments[path[k]];
      const double speed = s.free_speed * std::exp(cfg.speed_noise_sigma * gauss(rng));
      traj.truth.segment_speed.push_back(speed);
      cum[k + 1] = cum[k] + s.length / speed;
    }
    traj.truth.travel_time = cum.back();

    // orient each segment along the traversal direction
    std::vector<Vec2> seg_from(path.size()), seg_to(path.size());
    int at = a;
    for (size_t k = 0; k < path.size(); ++k) {
      const Segment& s = network.segments[path[k]];
      const int nxt = s.node_a == at ? s.node_b : s.node_a;
      seg_from[k] = network.nodes[at];
      seg_to[k] = network.nodes[nxt];
      at = nxt;
    }

    const double day = 86400.0;
    std::uniform_real_distribution<double> ustart(0.0, cfg.time_window_days * day);
    const double t0 = std::floor(ustart(rng));

    size_t seg_at = 0;
    for (double s_time = 0.0; s_time <= traj.truth.travel_time; s_time += cfg.sample_period) {
      while (seg_at + 1 < path.size() && s_time >= cum[seg_at + 1]) ++seg_at;
      const double frac =
          std::min(1.0, (s_time - cum[seg_at]) * traj.truth.segment_speed[seg_at] /
                            network.segments[path[seg_at]].length);
      Vec2 p{seg_from[seg_at].x + frac * (seg_to[seg_at].x - seg_from[seg_at].x),
             seg_from[seg_at].y + frac * (seg_to[seg_at].y - seg_from[seg_at].y)};
      if (cfg.noise_sigma > 0.0) {
        p.x += cfg.noise_sigma * gauss(rng);
        p.y += cfg.noise_sigma * gauss(rng);
      }
      GpsPoint gp;
      network.proj.to_latlon(p, gp.lat, gp.lon);
      gp.t = t0 + s_time;
      traj.points.push_back(gp);
      traj.truth.point_segment.push_back(path[seg_at]);
    }

    traj.truth.start_time = t0;
    const Vec2 dest = network.nodes[b];
    network.proj.to_latlon(dest, traj.truth.dest_lat, traj.truth.dest_lon);
    traj.truth.dest_cell = grid.cell_of(dest);
    out.push_back(std::move(traj));
  }
  return out;
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

void save_network_json(const RoadNetwork& network, const std::string& path) {
  json j;
  j["ref_lat"] = network.proj.ref_lat;
  j["ref_lon"] = network.proj.ref_lon;
  j["lattice_rows"] = network.lattice_rows;
  j["lattice_cols"] = network.lattice_cols;
  json nodes = json::array();
  for (const Vec2& p : network.nodes) nodes.push_back({p.x, p.y});
  j["nodes_xy"] = std::move(nodes);
  json segs = json::array();
  for (const Segment& s : network.segments) {
    segs.push_back({{"id", s.id},
                    {"node_a", s.node_a},
                    {"node_b", s.node_b},
                    {"lat1", s.lat1},
                    {"lon1", s.lon1},
                    {"lat2", s.lat2},
                    {"lon2", s.lon2},
                    {"road_type", road_type_name(s.road_type)},
                    {"length_m", s.length},
                    {"free_speed_mps", s.free_speed}});
  }
  j["segments"] = std::move(segs);
  json adj = json::array();
  for (const auto& nb : network.neighbors) adj.push_back(nb);
  j["adjacency"] = std::move(adj);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump() << "\n";
}

RoadNetwork load_network_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  json j;
  f >> j;
  RoadNetwork net;
  net.proj = FlatProjection{j.at("ref_lat").get<double>(), j.at("ref_lon").get<double>()};
  net.lattice_rows = j.at("lattice_rows").get<int>();
  net.lattice_cols = j.at("lattice_cols").get<int>();
  for (const auto& p : j.at("nodes_xy")) net.nodes.push_back({p[0].get<double>(), p[1].get<double>()});
  for (const auto& s : j.at("segments")) {
    Segment seg;
    seg.id = s.at("id").get<int>();
    seg.node_a = s.at("node_a").get<int>();
    seg.node_b = s.at("node_b").get<int>();
    seg.lat1 = s.at("lat1").get<double>();
    seg.lon1 = s.at("lon1").get<double>();
    seg.lat2 = s.at("lat2").get<double>();
    seg.lon2 = s.at("lon2").get<double>();
    seg.road_type = road_type_from_name(s.at("road_type").get<std::string>());
    seg.length = s.at("length_m").get<double>();
    seg.free_speed = s.at("free_speed_mps").get<double>();
    net.segments.push_back(seg);
  }
  rebuild_topology(net);
  return net;
}

void save_pois_csv(const std::vector<Poi>& pois, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(12);
  f << "lat,lon,category\n";
  for (const Poi& p : pois) f << p.lat << "," << p.lon << "," << p.category << "\n";
}

std::vector<Poi> load_pois_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<Poi> pois;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Poi p;
    const size_t c1 = line.find(',');
    const size_t c2 = line.find(',', c1 + 1);
    p.lat = std::stod(line.substr(0, c1));
    p.lon = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    p.category = std::stoi(line.substr(c2 + 1));
    pois.push_back(p);
  }
  return pois;
}

void save_trajectories_jsonl(const std::vector<GpsTrajectory>& trajs, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const GpsTrajectory& t : trajs) {
    json j;
    j["id"] = t.id;
    json pts = json::array();
    for (const GpsPoint& p : t.points) pts.push_back({p.lat, p.lon, p.t});
    j["points"] = std::move(pts);
    j["truth"] = {{"segments", t.truth.segment_seq},
                  {"speeds", t.truth.segment_speed},
                  {"point_segment", t.truth.point_segment},
                  {"travel_time", t.truth.travel_time},
                  {"dest_cell", t.truth.dest_cell},
                  {"dest_lat", t.truth.dest_lat},
                  {"dest_lon", t.truth.dest_lon},
                  {"origin_node", t.truth.origin_node},
                  {"dest_node", t.truth.dest_node},
                  {"start_time", t.truth.start_time}};
    f << j.dump() << "\n";
  }
}

std::vector<GpsTrajectory> load_trajectories_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<GpsTrajectory> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    GpsTrajectory t;
    t.id = j.at("id").get<int64_t>();
    for (const auto& p : j.at("points"))
      t.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    const auto& tr = j.at("truth");
    t.truth.segment_seq = tr.at("segments").get<std::vector<int>>();
    t.truth.segment_speed = tr.at("speeds").get<std::vector<double>>();
    t.truth.point_segment = tr.at("point_segment").get<std::vector<int>>();
    t.truth.travel_time = tr.at("travel_time").get<double>();
    t.truth.dest_cell = tr.at("dest_cell").get<int>();
    t.truth.dest_lat = tr.at("dest_lat").get<double>();
    t.truth.dest_lon = tr.at("dest_lon").get<double>();
    t.truth.origin_node = tr.at("origin_node").get<int>();
    t.truth.dest_node = tr.at("dest_node").get<int>();
    t.truth.start_time = tr.at("start_time").get<double>();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace trajview::synth
