#include "trajview/views/map_match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace trajview::views {

using synth::Vec2;

SegmentIndex::SegmentIndex(const synth::RoadNetwork& network, double cell_size)
    : network_(&network), cell_size_(cell_size) {
  if (network.segments.empty()) throw std::invalid_argument("SegmentIndex: empty network");
  double x1, y1;
  network.bounding_box(x0_, y0_, x1, y1);
  cols_ = std::max(1, static_cast<int>(std::ceil((x1 - x0_) / cell_size_)));
  rows_ = std::max(1, static_cast<int>(std::ceil((y1 - y0_) / cell_size_)));
  cells_.assign(static_cast<size_t>(rows_) * cols_, {});
  for (const synth::Segment& s : network.segments) {
    const Vec2 a = network.nodes[s.node_a];
    const Vec2 b = network.nodes[s.node_b];
    const int c0 = cell_col(std::min(a.x, b.x));
    const int c1 = cell_col(std::max(a.x, b.x));
    const int r0 = cell_row(std::min(a.y, b.y));
    const int r1 = cell_row(std::max(a.y, b.y));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) cells_[static_cast<size_t>(r) * cols_ + c].push_back(s.id);
  }
  stamp_.assign(network.segments.size(), 0);
}

int SegmentIndex::cell_col(double x) const {
  int c = static_cast<int>((x - x0_) / cell_size_);
  return std::clamp(c, 0, cols_ - 1);
}

int SegmentIndex::cell_row(double y) const {
  int r = static_cast<int>((y - y0_) / cell_size_);
  return std::clamp(r, 0, rows_ - 1);
}

// Visits candidate segments ring by ring around p's cell. Ring k >= 1 can
// only contain geometry at distance >= (k-1)*cell_size, so scanning stops
// once that bound exceeds stop_dist (which visit may tighten by returning
// a smaller value).
template <typename Visit>
void SegmentIndex::scan_rings(const Vec2& p, double stop_dist, Visit&& visit) const {
  ++stamp_gen_;
  const int pc = cell_col(p.x);
  const int pr = cell_row(p.y);
  const int max_ring = std::max(rows_, cols_);
  for (int ring = 0; ring <= max_ring; ++ring) {
    if (ring >= 1 && (ring - 1) * cell_size_ > stop_dist) break;
    bool any_cell = false;
    for (int r = pr - ring; r <= pr + ring; ++r) {
      if (r < 0 || r >= rows_) continue;
      for (int c = pc - ring; c <= pc + ring; ++c) {
        if (c < 0 || c >= cols_) continue;
        if (std::max(std::abs(r - pr), std::abs(c - pc)) != ring) continue;
        any_cell = true;
        for (int sid : cells_[static_cast<size_t>(r) * cols_ + c]) {
          if (stamp_[sid] == stamp_gen_) continue;
          stamp_[sid] = stamp_gen_;
          stop_dist = visit(sid, stop_dist);
        }
      }
    }
    if (!any_cell && ring > 0 && (pr - ring < 0 && pr + ring >= rows_ && pc - ring < 0 && pc + ring >= cols_))
      break;
  }
}

int SegmentIndex::nearest(const Vec2& p, double* dist_out) const {
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  scan_rings(p, std::numeric_limits<double>::infinity(), [&](int sid, double stop) {
    const double d = point_segment_distance(p, network_->endpoint_a(sid), network_->endpoint_b(sid));
    if (d < best_dist || (d == best_dist && sid < best)) {
      best_dist = d;
      best = sid;
      return best_dist;
    }
    return stop;
  });
  if (dist_out) *dist_out = best_dist;
  return best;
}

std::vector<int> SegmentIndex::within(const Vec2& p, double radius) const {
  std::vector<int> out;
  scan_rings(p, radius, [&](int sid, double stop) {
    const double d = point_segment_distance(p, network_->endpoint_a(sid), network_->endpoint_b(sid));
    if (d <= radius) out.push_back(sid);
    return stop;
  });
  if (out.empty()) out.push_back(nearest(p));
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<int> nearest_labels(const std::vector<Vec2>& pts, const SegmentIndex& index) {
  std::vector<int> labels(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) labels[i] = index.nearest(pts[i]);
  return labels;
}

// Viterbi over per-point candidate sets. Returns empty if no
// adjacency-feasible path exists.
std::vector<int> viterbi_labels(const std::vector<Vec2>& pts, const SegmentIndex& index,
                                const MapMatchConfig& cfg) {
  const synth::RoadNetwork& net = index.network();
  const double inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<std::vector<int>> cand(pts.size());
  std::vector<std::vector<double>> emit(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    cand[i] = index.within(pts[i], cfg.candidate_radius);
    emit[i].reserve(cand[i].size());
    for (int sid : cand[i]) {
      const double d = point_segment_distance(pts[i], net.endpoint_a(sid), net.endpoint_b(sid));
      emit[i].push_back(d * d * inv_two_sigma2);
    }
  }

  std::vector<std::vector<double>> cost(pts.size());
  std::vector<std::vector<int>> back(pts.size());
  cost[0] = emit[0];
  back[0].assign(cand[0].size(), -1);
  for (size_t i = 1; i < pts.size(); ++i) {
    cost[i].assign(cand[i].size(), inf);
    back[i].assign(cand[i].size(), -1);
    for (size_t j = 0; j < cand[i].size(); ++j) {
      double best = inf;
      int arg = -1;
      for (size_t k = 0; k < cand[i - 1].size(); ++k) {
        if (cost[i - 1][k] >= inf) continue;
        double trans;
        if (cand[i - 1][k] == cand[i][j])
          trans = 0.0;
        else if (net.adjacent(cand[i - 1][k], cand[i][j]))
          trans = cfg.transition_penalty;
        else
          continue;
        const double c = cost[i - 1][k] + trans;
        if (c < best) {
          best = c;
          arg = static_cast<int>(k);
        }
      }
      if (arg >= 0) {
        cost[i][j] = best + emit[i][j];
        back[i][j] = arg;
      }
    }
    bool alive = false;
    for (double c : cost[i])
      if (c < inf) {
        alive = true;
        break;
      }
    if (!alive) return {};
  }

  // lowest final cost, ties to the lower segment id (candidates are sorted)
  size_t last = pts.size() - 1;
  size_t best_j = 0;
  for (size_t j = 1; j < cand[last].size(); ++j)
    if (cost[last][j] < cost[last][best_j]) best_j = j;
  if (cost[last][best_j] >= inf) return {};

  std::vector<int> labels(pts.size());
  int j = static_cast<int>(best_j);
  for (size_t i = pts.size(); i-- > 0;) {
    labels[i] = cand[i][j];
    j = back[i][j];
  }
  return labels;
}

}  // namespace

MapMatchResult map_match(const synth::GpsTrajectory& traj, const SegmentIndex& index, const MapMatchConfig& cfg) {
  if (traj.points.empty()) throw std::invalid_argument("map_match: empty trajectory");
  const synth::RoadNetwork& net = index.network();
  std::vector<Vec2> pts(traj.points.size());
  for (size_t i = 0; i < pts.size(); ++i) pts[i] = net.proj.to_xy(traj.points[i].lat, traj.points[i].lon);

  MapMatchResult res;
  if (cfg.transition_penalty == 0.0) {
    res.point_labels = nearest_labels(pts, index);
  } else {
    res.point_labels = viterbi_labels(pts, index, cfg);
    if (res.point_labels.empty()) {
      res.point_labels = nearest_labels(pts, index);
      res.low_confidence = true;
    }
  }

  res.assignment.unit_of_point.resize(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i == 0 || res.point_labels[i] != res.point_labels[i - 1]) {
      res.route.entries.push_back({res.point_labels[i], traj.points[i].t});
    }
    res.assignment.unit_of_point[i] = static_cast<int>(res.route.entries.size()) - 1;
  }
  res.assignment.unit_count = static_cast<int>(res.route.entries.size());
  return res;
}

}  // namespace trajview::views
