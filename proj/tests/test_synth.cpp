#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <map>
#include <queue>
#include <set>

#include "trajview/synth/city.hpp"

using namespace trajview::synth;

namespace {

bool segment_graph_connected(const RoadNetwork& net) {
  if (net.segments.empty()) return false;
  std::vector<bool> seen(net.segments.size(), false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  size_t count = 1;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int u : net.neighbors[v])
      if (!seen[u]) {
        seen[u] = true;
        ++count;
        q.push(u);
      }
  }
  return count == net.segments.size();
}

}  // namespace

TEST_CASE("road network: lattice edge counts without drops") {
  auto n22 = generate_road_network(1, 2, 2, 0.0);
  CHECK(n22.size() == 4);
  auto n44 = generate_road_network(1, 4, 4, 0.0);
  CHECK(n44.size() == 24);
}

TEST_CASE("road network: adjacency is symmetric with no self loops, graph connected") {
  for (uint64_t seed : {1ull, 7ull, 42ull}) {
    auto net = generate_road_network(seed, 8, 8, 0.15);
    for (size_t v = 0; v < net.size(); ++v) {
      for (int u : net.neighbors[v]) {
        CHECK(u != static_cast<int>(v));
        CHECK(net.adjacent(u, static_cast<int>(v)));
      }
    }
    CHECK(segment_graph_connected(net));
    const int expected_drop = static_cast<int>(0.15 * (2 * 8 * 7));
    CHECK(net.size() == 2 * 8 * 7 - expected_drop);
  }
}

TEST_CASE("road network: all four road types present with ring banding") {
  auto net = generate_road_network(3, 10, 10, 0.0);
  std::map<RoadType, int> counts;
  for (const auto& s : net.segments) {
    CHECK(s.length > 0.0);
    CHECK(s.free_speed == free_speed_for(s.road_type));
    counts[s.road_type]++;
  }
  CHECK(counts.size() == 4);
  // outer-ring edges are primary: the top-left horizontal edge touches ring 0
  CHECK(net.segments[0].road_type == RoadType::Primary);
}

TEST_CASE("road network: identical seeds give identical networks") {
  auto a = generate_road_network(11, 6, 7, 0.2);
  auto b = generate_road_network(11, 6, 7, 0.2);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.segments[i].node_a == b.segments[i].node_a);
    CHECK(a.segments[i].node_b == b.segments[i].node_b);
    CHECK(a.segments[i].road_type == b.segments[i].road_type);
  }
}

TEST_CASE("road network: precondition violations") {
  CHECK_THROWS_AS(generate_road_network(1, 1, 5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(generate_road_network(1, 4, 4, 0.5), std::invalid_argument);
}

TEST_CASE("pois: inside bounding box, deterministic, 13 categories") {
  auto net = generate_road_network(5, 8, 8, 0.1);
  auto pois = generate_pois(net, 9, 6);
  auto pois2 = generate_pois(net, 9, 6);
  REQUIRE(pois.size() == pois2.size());
  double x0, y0, x1, y1;
  net.bounding_box(x0, y0, x1, y1);
  for (size_t i = 0; i < pois.size(); ++i) {
    CHECK(pois[i].lat == pois2[i].lat);
    CHECK(pois[i].category == pois2[i].category);
    CHECK(pois[i].category >= 0);
    CHECK(pois[i].category < kPoiCategories);
    const Vec2 p = net.proj.to_xy(pois[i].lat, pois[i].lon);
    CHECK(p.x >= x0 - 1e-6);
    CHECK(p.x <= x1 + 1e-6);
    CHECK(p.y >= y0 - 1e-6);
    CHECK(p.y <= y1 + 1e-6);
  }
}

TEST_CASE("pois: a zone concentrates on its focus category") {
  auto net = generate_road_network(5, 8, 8, 0.0);
  // zone 3 focuses category 3; aggregate across seeds for a stable estimate
  int focus_hits = 0, total = 0;
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    auto pois = generate_pois(net, seed, 6, 40);
    double x0, y0, x1, y1;
    net.bounding_box(x0, y0, x1, y1);
    const double strip = (x1 - x0) / 6;
    for (const auto& p : pois) {
      const Vec2 xy = net.proj.to_xy(p.lat, p.lon);
      if (xy.x >= x0 + 3 * strip && xy.x < x0 + 4 * strip) {
        ++total;
        if (p.category == 3) ++focus_hits;
      }
    }
  }
  REQUIRE(total >= 150);
  CHECK(static_cast<double>(focus_hits) / total >= 0.6);
}

TEST_CASE("pois: every zone is populated") {
  auto net = generate_road_network(2, 6, 6, 0.0);
  auto pois = generate_pois(net, 4, 9, 5);
  double x0, y0, x1, y1;
  net.bounding_box(x0, y0, x1, y1);
  const double strip = (x1 - x0) / 9;
  std::vector<int> zone_counts(9, 0);
  for (const auto& p : pois) {
    const Vec2 xy = net.proj.to_xy(p.lat, p.lon);
    int z = std::min(8, static_cast<int>((xy.x - x0) / strip));
    zone_counts[z]++;
  }
  for (int z = 0; z < 9; ++z) CHECK(zone_counts[z] >= 1);
}

TEST_CASE("simulate: zero noise puts every point on its true segment") {
  auto net = generate_road_network(7, 8, 8, 0.1);
  SimulateConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.min_od_blocks = 6;
  auto trajs = simulate_trajectories(net, 21, 20, cfg);
  for (const auto& t : trajs) {
    REQUIRE(t.points.size() >= 2);
    REQUIRE(t.truth.point_segment.size() == t.points.size());
    for (size_t i = 0; i < t.points.size(); ++i) {
      const Segment& s = net.segments[t.truth.point_segment[i]];
      const Vec2 p = net.proj.to_xy(t.points[i].lat, t.points[i].lon);
      CHECK(point_segment_distance(p, net.nodes[s.node_a], net.nodes[s.node_b]) < 1e-6);
    }
  }
}

TEST_CASE("simulate: truth travel time is the sum of length over realized speed") {
  auto net = generate_road_network(7, 8, 8, 0.0);
  SimulateConfig cfg;
  cfg.min_od_blocks = 5;
  auto trajs = simulate_trajectories(net, 13, 10, cfg);
  for (const auto& t : trajs) {
    double sum = 0.0;
    for (size_t k = 0; k < t.truth.segment_seq.size(); ++k)
      sum += net.segments[t.truth.segment_seq[k]].length / t.truth.segment_speed[k];
    CHECK(t.truth.travel_time == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("simulate: ground-truth paths are connected under adjacency") {
  auto net = generate_road_network(19, 8, 8, 0.15);
  SimulateConfig cfg;
  cfg.min_od_blocks = 5;
  auto trajs = simulate_trajectories(net, 3, 30, cfg);
  for (const auto& t : trajs) {
    for (size_t k = 0; k + 1 < t.truth.segment_seq.size(); ++k)
      CHECK(net.adjacent(t.truth.segment_seq[k], t.truth.segment_seq[k + 1]));
  }
}

TEST_CASE("simulate: timestamps advance by exactly the sample period") {
  auto net = generate_road_network(1, 8, 8, 0.0);
  SimulateConfig cfg;
  cfg.sample_period = 5.0;
  cfg.min_od_blocks = 5;
  auto trajs = simulate_trajectories(net, 2, 10, cfg);
  for (const auto& t : trajs)
    for (size_t i = 1; i < t.points.size(); ++i)
      CHECK(t.points[i].t - t.points[i - 1].t == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("simulate: mean realized speed stays within 5% of free speed") {
  auto net = generate_road_network(23, 8, 8, 0.0);
  SimulateConfig cfg;
  cfg.min_od_blocks = 5;
  auto trajs = simulate_trajectories(net, 99, 2500, cfg);
  std::map<int, std::pair<double, int>> by_segment;  // sum, count
  for (const auto& t : trajs)
    for (size_t k = 0; k < t.truth.segment_seq.size(); ++k) {
      auto& acc = by_segment[t.truth.segment_seq[k]];
      acc.first += t.truth.segment_speed[k];
      acc.second += 1;
    }
  int checked = 0;
  for (const auto& [sid, acc] : by_segment) {
    if (acc.second < 200) continue;
    ++checked;
    const double mean = acc.first / acc.second;
    const double free = net.segments[sid].free_speed;
    CHECK(std::fabs(mean - free) / free < 0.05);
  }
  CHECK(checked >= 3);
}

TEST_CASE("simulate: determinism across calls") {
  auto net = generate_road_network(4, 8, 8, 0.1);
  SimulateConfig cfg;
  cfg.min_od_blocks = 5;
  auto a = simulate_trajectories(net, 77, 5, cfg);
  auto b = simulate_trajectories(net, 77, 5, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].points.size() == b[i].points.size());
    for (size_t k = 0; k < a[i].points.size(); ++k) {
      CHECK(a[i].points[k].lat == b[i].points[k].lat);
      CHECK(a[i].points[k].lon == b[i].points[k].lon);
    }
    CHECK(a[i].truth.segment_seq == b[i].truth.segment_seq);
  }
}

TEST_CASE("file round-trips preserve the dataset") {
  auto net = generate_road_network(31, 5, 6, 0.1);
  auto pois = generate_pois(net, 3, 4, 7);
  SimulateConfig cfg;
  cfg.min_od_blocks = 4;
  auto trajs = simulate_trajectories(net, 8, 4, cfg);

  const std::string dir = "synth_io_test_";
  save_network_json(net, dir + "network.json");
  save_pois_csv(pois, dir + "pois.csv");
  save_trajectories_jsonl(trajs, dir + "traj.jsonl");

  auto net2 = load_network_json(dir + "network.json");
  REQUIRE(net2.size() == net.size());
  for (size_t i = 0; i < net.size(); ++i) {
    CHECK(net2.segments[i].lat1 == net.segments[i].lat1);
    CHECK(net2.segments[i].length == net.segments[i].length);
    CHECK(net2.neighbors[i] == net.neighbors[i]);
  }
  auto pois2 = load_pois_csv(dir + "pois.csv");
  REQUIRE(pois2.size() == pois.size());
  for (size_t i = 0; i < pois.size(); ++i) CHECK(pois2[i].category == pois[i].category);

  auto trajs2 = load_trajectories_jsonl(dir + "traj.jsonl");
  REQUIRE(trajs2.size() == trajs.size());
  for (size_t i = 0; i < trajs.size(); ++i) {
    CHECK(trajs2[i].points.size() == trajs[i].points.size());
    CHECK(trajs2[i].truth.segment_seq == trajs[i].truth.segment_seq);
    CHECK(trajs2[i].truth.travel_time == trajs[i].truth.travel_time);
    for (size_t k = 0; k < trajs[i].points.size(); ++k) {
      CHECK(trajs2[i].points[k].lat == trajs[i].points[k].lat);
      CHECK(trajs2[i].points[k].t == trajs[i].points[k].t);
    }
  }
  std::remove((dir + "network.json").c_str());
  std::remove((dir + "pois.csv").c_str());
  std::remove((dir + "traj.jsonl").c_str());
}
