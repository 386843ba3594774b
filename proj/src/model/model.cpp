#include "trajview/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "trajview/engine/rng.hpp"

namespace trajview::model {

using engine::Tape;
using engine::Tensor;
using engine::Var;

const char* stream_name(int s) {
  switch (s) {
    case kRoute: return "route";
    case kGpsRoute: return "gps_route";
    case kGrid: return "grid";
    case kGpsGrid: return "gps_grid";
  }
  return "?";
}

namespace {

constexpr int kMinuteBuckets = 1440;
constexpr int kDowBuckets = 7;

Tensor keep_matrix(int len, int dim, const std::vector<int>& masked) {
  Tensor keep = Tensor::full(len, dim, 1.0);
  for (int u : masked)
    for (int c = 0; c < dim; ++c) keep.at(u, c) = 0.0;
  return keep;
}

Tensor mask_column(int len, const std::vector<int>& masked) {
  Tensor col(len, 1);
  for (int u : masked) col.at(u, 0) = 1.0;
  return col;
}

}  // namespace

struct MultiViewModel::Binder {
  Tape& tape;
  engine::ParamStore& store;
  std::map<std::string, Var> cache;

  Var operator()(const std::string& name) {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    Var v = store.bind(tape, name);
    cache.emplace(name, v);
    return v;
  }
};

MultiViewModel::MultiViewModel(const ModelConfig& cfg, const synth::RoadNetwork& network,
                               views::Vocab segment_vocab, views::Vocab cell_vocab, views::GridSpec grid,
                               views::DatasetStats stats)
    : cfg_(cfg),
      proj_(network.proj),
      segment_vocab_(std::move(segment_vocab)),
      cell_vocab_(std::move(cell_vocab)),
      grid_(grid),
      stats_(stats),
      n_network_segments_(static_cast<int>(network.size())),
      store_(cfg.seed) {
  if (cfg_.dim % 2 != 0 || cfg_.dim % cfg_.heads != 0)
    throw std::invalid_argument("ModelConfig: dim must be even and divisible by heads");
  adj_self_ = Tensor(n_network_segments_, n_network_segments_);
  for (int v = 0; v < n_network_segments_; ++v) {
    adj_self_.at(v, v) = 1.0;
    for (int u : network.neighbors[v]) adj_self_.at(v, u) = 1.0;
  }
  create_params();
}

void MultiViewModel::create_params() {
  using engine::Init;
  const int d = cfg_.dim;
  const int h = cfg_.gru_hidden();
  const int ff = d * cfg_.ff_mult;

  auto time_module = [&](const std::string& prefix) {
    store_.create(prefix + ".minute", kMinuteBuckets, d, Init::Normal02);
    store_.create(prefix + ".dow", kDowBuckets, d, Init::Normal02);
    store_.create(prefix + ".tt_w", 1, d, Init::GlorotUniform);
    store_.create(prefix + ".tt_b", 1, d, Init::Zeros);
    store_.create(prefix + ".unknown", 1, d, Init::Normal02);
  };
  auto block = [&](const std::string& prefix) {
    store_.create(prefix + ".ln1_g", 1, d, Init::Ones);
    store_.create(prefix + ".ln1_b", 1, d, Init::Zeros);
    store_.create(prefix + ".wq", d, d, Init::GlorotUniform);
    store_.create(prefix + ".bq", 1, d, Init::Zeros);
    store_.create(prefix + ".wk", d, d, Init::GlorotUniform);
    store_.create(prefix + ".wv", d, d, Init::GlorotUniform);
    store_.create(prefix + ".bv", 1, d, Init::Zeros);
    store_.create(prefix + ".wo", d, d, Init::GlorotUniform);
    store_.create(prefix + ".bo", 1, d, Init::Zeros);
    store_.create(prefix + ".ln2_g", 1, d, Init::Ones);
    store_.create(prefix + ".ln2_b", 1, d, Init::Zeros);
    store_.create(prefix + ".ff_w1", d, ff, Init::GlorotUniform);
    store_.create(prefix + ".ff_b1", 1, ff, Init::Zeros);
    store_.create(prefix + ".ff_w2", ff, d, Init::GlorotUniform);
    store_.create(prefix + ".ff_b2", 1, d, Init::Zeros);
  };
  auto stack = [&](const std::string& prefix) {
    for (int i = 0; i < cfg_.depth; ++i) block(prefix + "." + std::to_string(i));
  };
  auto gru = [&](const std::string& prefix, int in) {
    store_.create(prefix + ".wx", in, 3 * h, Init::GlorotUniform);
    store_.create(prefix + ".u_zr", h, 2 * h, Init::GlorotUniform);
    store_.create(prefix + ".u_n", h, h, Init::GlorotUniform);
    store_.create(prefix + ".b_zr", 1, 2 * h, Init::Zeros);
    store_.create(prefix + ".b_n", 1, h, Init::Zeros);
  };

  // route view
  store_.create("route.seg_table", n_network_segments_ + 1, d, Init::Normal02);
  store_.create("route.gat.w", d, d, Init::GlorotUniform);
  store_.create("route.gat.attn_src", d, 1, Init::GlorotUniform);
  store_.create("route.gat.attn_dst", d, 1, Init::GlorotUniform);
  store_.create("route.mask", 1, d, Init::Normal02);
  time_module("route.time");
  stack("route.tf");

  // gps view, shared by both assignments
  store_.create("gps.point_proj.w", 4, d, Init::GlorotUniform);
  store_.create("gps.point_proj.b", 1, d, Init::Zeros);
  gru("gps.l1.fw", d);
  gru("gps.l1.bw", d);
  gru("gps.l2.fw", d);
  gru("gps.l2.bw", d);
  store_.create("gps.out.w", d, d, Init::GlorotUniform);
  store_.create("gps.out.b", 1, d, Init::Zeros);
  store_.create("gps.mask", 1, d, Init::Normal02);

  // grid view
  if (!cfg_.no_grid_view) {
    store_.create("grid.cell_table", grid_.cell_count() + 1, d, Init::Normal02);
    store_.create("grid.cat_table", synth::kPoiCategories, d, Init::Normal02);
    store_.create("grid.mask", 1, d, Init::Normal02);
    time_module("grid.time");
    stack("grid.tf");
  }

  // fusion
  const int active = cfg_.active_streams();
  if (!cfg_.no_inter_modal) {
    for (int a = 0; a < active; ++a)
      for (int b = 0; b < active; ++b) {
        if (a == b) continue;
        const std::string prefix =
            std::string("fusion.inter.") + stream_name(a) + "." + stream_name(b);
        store_.create(prefix + ".wq", d, d, Init::GlorotUniform);
        store_.create(prefix + ".bq", 1, d, Init::Zeros);
        store_.create(prefix + ".wk", d, d, Init::GlorotUniform);
        store_.create(prefix + ".wv", d, d, Init::GlorotUniform);
        store_.create(prefix + ".bv", 1, d, Init::Zeros);
        store_.create(prefix + ".wo", d, d, Init::GlorotUniform);
        store_.create(prefix + ".bo", 1, d, Init::Zeros);
      }
  }
  store_.create("fusion.type", active, d, Init::Normal02);
  stack("fusion.tf");

  // masked-token heads: route streams share one, grid streams share one
  store_.create("mlm.seg.w", d, segment_vocab_.size(), Init::GlorotUniform);
  store_.create("mlm.seg.b", 1, segment_vocab_.size(), Init::Zeros);
  if (!cfg_.no_grid_view) {
    store_.create("mlm.cell.w", d, cell_vocab_.size(), Init::GlorotUniform);
    store_.create("mlm.cell.b", 1, cell_vocab_.size(), Init::Zeros);
  }
}

// ---------------------------------------------------------------------------
// input preparation
// ---------------------------------------------------------------------------

SampleInput MultiViewModel::build_input(const views::Sample& sample, InputMode mode) const {
  const bool time_masked = mode == InputMode::kTimeMasked;
  if (sample.route.entries.empty() || sample.grid.entries.empty() || sample.gps.points.empty())
    throw std::invalid_argument("build_input: sample has an empty view");
  if (sample.b_route.unit_count != static_cast<int>(sample.route.size()) ||
      sample.b_route.rows() != sample.gps.points.size() ||
      sample.b_grid.unit_count != static_cast<int>(sample.grid.size()) ||
      sample.b_grid.rows() != sample.gps.points.size())
    throw std::invalid_argument("build_input: assignment matrices do not match the collapsed views");

  SampleInput in;
  in.id = sample.id;
  in.split = sample.split;
  in.low_confidence = sample.low_confidence;
  in.duration = sample.gps.truth.travel_time;
  in.dest_cell = sample.gps.truth.dest_cell;

  const double trip_end = sample.gps.points.back().t;
  auto temporal = [&](double arrival, double next_arrival) {
    TemporalFeats f;
    if (time_masked) {
      f.unknown = true;
      return f;
    }
    const auto sec = static_cast<long long>(arrival);
    f.minute = static_cast<int>((sec / 60) % kMinuteBuckets);
    f.dow = static_cast<int>((sec / 86400) % kDowBuckets);
    f.travel_time = std::max(0.0, next_arrival - arrival) / stats_.dwell_scale;
    return f;
  };

  for (size_t i = 0; i < sample.route.size(); ++i) {
    const int sid = sample.route.entries[i].segment_id;
    in.route_rows.push_back(sid >= 0 && sid < n_network_segments_ ? sid : n_network_segments_);
    in.route_targets.push_back(segment_vocab_.lookup(sid));
    const double next =
        i + 1 < sample.route.size() ? sample.route.entries[i + 1].arrival_time : trip_end;
    in.route_time.push_back(temporal(sample.route.entries[i].arrival_time, next));
  }

  const int cell_count = grid_.cell_count();
  in.grid_sem = Tensor(static_cast<int>(sample.grid.size()), synth::kPoiCategories);
  for (size_t i = 0; i < sample.grid.size(); ++i) {
    const views::GridEntry& e = sample.grid.entries[i];
    in.cell_rows.push_back(e.cell_id >= 0 && e.cell_id < cell_count ? e.cell_id : cell_count);
    in.cell_targets.push_back(cell_vocab_.lookup(e.cell_id));
    for (int c = 0; c < synth::kPoiCategories; ++c) in.grid_sem.at(static_cast<int>(i), c) = e.sem[c];
    const double next = i + 1 < sample.grid.size() ? sample.grid.entries[i + 1].arrival_time : trip_end;
    in.grid_time.push_back(temporal(e.arrival_time, next));
  }

  const double x_span = std::max(1e-9, stats_.x_max - stats_.x_min);
  const double y_span = std::max(1e-9, stats_.y_max - stats_.y_min);
  in.gps_feats = Tensor(static_cast<int>(sample.gps.points.size()), 4);
  synth::Vec2 prev{};
  for (size_t i = 0; i < sample.gps.points.size(); ++i) {
    const synth::Vec2 p = proj_.to_xy(sample.gps.points[i].lat, sample.gps.points[i].lon);
    in.gps_feats.at(static_cast<int>(i), 0) = (p.x - stats_.x_min) / x_span;
    in.gps_feats.at(static_cast<int>(i), 1) = (p.y - stats_.y_min) / y_span;
    if (i > 0 && !time_masked) {
      const double dt = sample.gps.points[i].t - sample.gps.points[i - 1].t;
      const double sp = dt > 0 ? synth::dist(prev, p) / dt : 0.0;
      in.gps_feats.at(static_cast<int>(i), 2) = (dt - stats_.dt_mean) / stats_.dt_std;
      in.gps_feats.at(static_cast<int>(i), 3) = (sp - stats_.speed_mean) / stats_.speed_std;
    }
    prev = p;
  }

  in.route_runs = sample.b_route.runs();
  in.grid_runs = sample.b_grid.runs();
  if (in.route_runs.size() != sample.route.size() || in.grid_runs.size() != sample.grid.size())
    throw std::invalid_argument("build_input: assignment runs inconsistent with collapsed units");
  return in;
}

MaskSet MultiViewModel::make_masks(const SampleInput& input, const LossConfig& loss, uint64_t seed) const {
  MaskSet m;
  const int route_len = static_cast<int>(input.route_rows.size());
  const int grid_len = static_cast<int>(input.cell_rows.size());
  m.units[kRoute] = make_mask(route_len, loss.mask_prob, loss.mask_span,
                              engine::mix_seed({seed, static_cast<uint64_t>(kRoute)}));
  m.units[kGpsRoute] = make_mask(route_len, loss.mask_prob, loss.mask_span,
                                 engine::mix_seed({seed, static_cast<uint64_t>(kGpsRoute)}));
  if (!cfg_.no_grid_view) {
    m.units[kGrid] = make_mask(grid_len, loss.mask_prob, loss.mask_span,
                               engine::mix_seed({seed, static_cast<uint64_t>(kGrid)}));
    m.units[kGpsGrid] = make_mask(grid_len, loss.mask_prob, loss.mask_span,
                                  engine::mix_seed({seed, static_cast<uint64_t>(kGpsGrid)}));
  }
  return m;
}

// ---------------------------------------------------------------------------
// encoders
// ---------------------------------------------------------------------------

Var MultiViewModel::gat_pass(Binder& bind) {
  Var table = bind("route.seg_table");
  Var nodes = bind.tape.slice_rows(table, 0, n_network_segments_);
  engine::GatParams gp{bind("route.gat.w"), bind("route.gat.attn_src"), bind("route.gat.attn_dst")};
  Var z = engine::gat_layer(bind.tape, nodes, adj_self_, gp);
  Var unk = bind.tape.slice_rows(table, n_network_segments_, 1);
  std::vector<Var> parts{z, unk};
  return bind.tape.concat_rows(parts);
}

Var MultiViewModel::temporal_rows(Binder& bind, const std::string& prefix,
                                  const std::vector<TemporalFeats>& feats,
                                  const std::vector<int>& masked_units) const {
  Tape& tape = bind.tape;
  const int len = static_cast<int>(feats.size());
  const int d = cfg_.dim;
  std::vector<int> minutes(len), dows(len);
  Tensor tt(len, 1);
  std::vector<bool> unknown(len);
  for (int i = 0; i < len; ++i) {
    minutes[i] = feats[i].minute;
    dows[i] = feats[i].dow;
    tt.at(i, 0) = feats[i].travel_time;
    unknown[i] = feats[i].unknown;
  }
  for (int u : masked_units) unknown[u] = true;

  Tensor keep(len, d);
  Tensor unk_col(len, 1);
  for (int i = 0; i < len; ++i) {
    if (unknown[i]) {
      unk_col.at(i, 0) = 1.0;
      minutes[i] = 0;
      dows[i] = 0;
      tt.at(i, 0) = 0.0;
    } else {
      for (int c = 0; c < d; ++c) keep.at(i, c) = 1.0;
    }
  }

  Var t = tape.gather_rows(bind(prefix + ".minute"), minutes);
  t = tape.add(t, tape.gather_rows(bind(prefix + ".dow"), dows));
  t = tape.add(t, tape.add_rowvec(tape.matmul(tape.constant(tt), bind(prefix + ".tt_w")), bind(prefix + ".tt_b")));
  t = tape.mul(t, tape.constant(keep));
  return tape.add(t, tape.matmul(tape.constant(unk_col), bind(prefix + ".unknown")));
}

Var MultiViewModel::transformer_stack(Binder& bind, const std::string& prefix, Var tokens) {
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    engine::TransformerBlockParams bp;
    bp.ln1_g = bind(p + ".ln1_g");
    bp.ln1_b = bind(p + ".ln1_b");
    bp.attn = engine::AttentionParams{bind(p + ".wq"), bind(p + ".bq"), bind(p + ".wk"),
                                      bind(p + ".wv"), bind(p + ".bv"), bind(p + ".wo"), bind(p + ".bo")};
    bp.ln2_g = bind(p + ".ln2_g");
    bp.ln2_b = bind(p + ".ln2_b");
    bp.ff_w1 = bind(p + ".ff_w1");
    bp.ff_b1 = bind(p + ".ff_b1");
    bp.ff_w2 = bind(p + ".ff_w2");
    bp.ff_b2 = bind(p + ".ff_b2");
    tokens = engine::transformer_block(bind.tape, tokens, bp, cfg_.heads);
  }
  return tokens;
}

EncodedView MultiViewModel::encode_route(Binder& bind, const SampleInput& in, const std::vector<int>& masked,
                                         Var gat_table) {
  Tape& tape = bind.tape;
  const int len = static_cast<int>(in.route_rows.size());
  Var spatial = tape.gather_rows(gat_table, in.route_rows);
  spatial = tape.mul(spatial, tape.constant(keep_matrix(len, cfg_.dim, masked)));
  spatial = tape.add(spatial, tape.matmul(tape.constant(mask_column(len, masked)), bind("route.mask")));
  Var tokens = tape.add(spatial, temporal_rows(bind, "route.time", in.route_time, masked));
  tokens = tape.add(tokens, tape.constant(engine::sinusoidal_positions(len, cfg_.dim)));
  tokens = transformer_stack(bind, "route.tf", tokens);
  return {tape.mean_rows(tokens), tokens};
}

EncodedView MultiViewModel::encode_gps(Binder& bind, const SampleInput& in,
                                       const std::vector<std::pair<int, int>>& runs,
                                       const std::vector<int>& masked) {
  Tape& tape = bind.tape;
  const int h = cfg_.gru_hidden();
  Var pts = tape.constant(in.gps_feats);
  Var proj = tape.linear(pts, bind("gps.point_proj.w"), bind("gps.point_proj.b"));
  engine::GruParams l1f{bind("gps.l1.fw.wx"), bind("gps.l1.fw.u_zr"), bind("gps.l1.fw.u_n"),
                        bind("gps.l1.fw.b_zr"), bind("gps.l1.fw.b_n")};
  engine::GruParams l1b{bind("gps.l1.bw.wx"), bind("gps.l1.bw.u_zr"), bind("gps.l1.bw.u_n"),
                        bind("gps.l1.bw.b_zr"), bind("gps.l1.bw.b_n")};
  std::vector<Var> summaries;
  summaries.reserve(runs.size());
  for (const auto& [first, count] : runs) {
    Var sub = tape.slice_rows(proj, first, count);
    summaries.push_back(engine::bigru_encode(tape, sub, l1f, l1b, h).summary);
  }
  Var subs = tape.concat_rows(summaries);
  const int len = static_cast<int>(runs.size());
  subs = tape.mul(subs, tape.constant(keep_matrix(len, cfg_.dim, masked)));
  subs = tape.add(subs, tape.matmul(tape.constant(mask_column(len, masked)), bind("gps.mask")));
  engine::GruParams l2f{bind("gps.l2.fw.wx"), bind("gps.l2.fw.u_zr"), bind("gps.l2.fw.u_n"),
                        bind("gps.l2.fw.b_zr"), bind("gps.l2.fw.b_n")};
  engine::GruParams l2b{bind("gps.l2.bw.wx"), bind("gps.l2.bw.u_zr"), bind("gps.l2.bw.u_n"),
                        bind("gps.l2.bw.b_zr"), bind("gps.l2.bw.b_n")};
  auto l2 = engine::bigru_encode(tape, subs, l2f, l2b, h);
  Var h_s = tape.linear(l2.states, bind("gps.out.w"), bind("gps.out.b"));
  return {tape.mean_rows(h_s), h_s};
}

EncodedView MultiViewModel::encode_grid(Binder& bind, const SampleInput& in, const std::vector<int>& masked) {
  Tape& tape = bind.tape;
  const int len = static_cast<int>(in.cell_rows.size());
  Var spatial = tape.gather_rows(bind("grid.cell_table"), in.cell_rows);
  spatial = tape.add(spatial, tape.matmul(tape.constant(in.grid_sem), bind("grid.cat_table")));
  spatial = tape.mul(spatial, tape.constant(keep_matrix(len, cfg_.dim, masked)));
  spatial = tape.add(spatial, tape.matmul(tape.constant(mask_column(len, masked)), bind("grid.mask")));
  Var tokens = tape.add(spatial, temporal_rows(bind, "grid.time", in.grid_time, masked));
  tokens = tape.add(tokens, tape.constant(engine::sinusoidal_positions(len, cfg_.dim)));
  tokens = transformer_stack(bind, "grid.tf", tokens);
  return {tape.mean_rows(tokens), tokens};
}

std::array<EncodedView, kStreamCount> MultiViewModel::encode_bound(Binder& bind, const SampleInput& input,
                                                                   const MaskSet& mask, Var gat_table) {
  std::array<EncodedView, kStreamCount> enc;
  enc[kRoute] = encode_route(bind, input, mask.units[kRoute], gat_table);
  enc[kGpsRoute] = encode_gps(bind, input, input.route_runs, mask.units[kGpsRoute]);
  if (!cfg_.no_grid_view) {
    enc[kGrid] = encode_grid(bind, input, mask.units[kGrid]);
    enc[kGpsGrid] = encode_gps(bind, input, input.grid_runs, mask.units[kGpsGrid]);
  }
  return enc;
}

std::array<EncodedView, kStreamCount> MultiViewModel::encode_sample(Tape& tape, const SampleInput& input,
                                                                    const MaskSet& mask) {
  Binder bind{tape, store_};
  Var gat_table = gat_pass(bind);
  auto enc = encode_bound(bind, input, mask, gat_table);
  store_.collect_grads(tape);  // unbind; caller only reads values
  return enc;
}

// ---------------------------------------------------------------------------
// fusion
// ---------------------------------------------------------------------------

std::array<Var, kStreamCount> MultiViewModel::inter_modal_bound(
    Binder& bind, const std::array<EncodedView, kStreamCount>& enc) {
  Tape& tape = bind.tape;
  const int active = cfg_.active_streams();
  std::array<Var, kStreamCount> seq{};
  for (int a = 0; a < active; ++a) {
    if (tape.value(enc[a].h_s).rows() < 1) throw std::invalid_argument("inter_modal: empty stream sequence");
    std::vector<Var> parts{enc[a].h_t, enc[a].h_s};
    seq[a] = tape.concat_rows(parts);
  }
  if (cfg_.no_inter_modal) return seq;

  std::array<Var, kStreamCount> mixed{};
  for (int a = 0; a < active; ++a) {
    Var acc{};
    for (int b = 0; b < active; ++b) {
      if (a == b) continue;
      const std::string p = std::string("fusion.inter.") + stream_name(a) + "." + stream_name(b);
      engine::AttentionParams ap{bind(p + ".wq"), bind(p + ".bq"), bind(p + ".wk"),
                                 bind(p + ".wv"), bind(p + ".bv"), bind(p + ".wo"), bind(p + ".bo")};
      Var o = engine::multi_head_attention(tape, seq[a], seq[b], ap, cfg_.heads);
      acc = acc.valid() ? tape.add(acc, o) : o;
    }
    mixed[a] = acc;
  }
  return mixed;
}

std::array<Var, kStreamCount> MultiViewModel::global_context_bound(
    Binder& bind, const std::array<Var, kStreamCount>& mixed) {
  Tape& tape = bind.tape;
  const int active = cfg_.active_streams();
  std::vector<Var> parts;
  std::vector<int> lens(active);
  for (int a = 0; a < active; ++a) {
    parts.push_back(mixed[a]);
    lens[a] = tape.value(mixed[a]).rows();
  }
  Var x = tape.concat_rows(parts);
  std::vector<int> type_ids;
  type_ids.reserve(tape.value(x).rows());
  for (int a = 0; a < active; ++a) type_ids.insert(type_ids.end(), lens[a], a);
  x = tape.add(x, tape.gather_rows(bind("fusion.type"), type_ids));
  x = tape.add(x, tape.constant(engine::sinusoidal_positions(tape.value(x).rows(), cfg_.dim)));
  x = transformer_stack(bind, "fusion.tf", x);

  std::array<Var, kStreamCount> fused{};
  int offset = 0;
  for (int a = 0; a < active; ++a) {
    fused[a] = tape.slice_rows(x, offset, lens[a]);
    offset += lens[a];
  }
  return fused;
}

std::array<Var, kStreamCount> MultiViewModel::fuse_sample(Binder& bind,
                                                          const std::array<EncodedView, kStreamCount>& enc) {
  return global_context_bound(bind, inter_modal_bound(bind, enc));
}

std::array<Var, kStreamCount> MultiViewModel::inter_modal(Tape& tape,
                                                          const std::array<EncodedView, kStreamCount>& enc) {
  Binder bind{tape, store_};
  return inter_modal_bound(bind, enc);
}

std::array<Var, kStreamCount> MultiViewModel::global_context(Tape& tape,
                                                             const std::array<Var, kStreamCount>& mixed) {
  Binder bind{tape, store_};
  return global_context_bound(bind, mixed);
}

// ---------------------------------------------------------------------------
// batch forward
// ---------------------------------------------------------------------------

MultiViewModel::Forward MultiViewModel::forward(Tape& tape, const std::vector<SampleInput>& batch,
                                                const std::vector<MaskSet>& masks) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  if (masks.size() != batch.size()) throw std::invalid_argument("forward: one mask set per sample required");
  Binder bind{tape, store_};
  Forward out;
  Var gat_table = gat_pass(bind);

  const int active = cfg_.active_streams();
  out.encoded.reserve(batch.size());
  out.fused.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    out.encoded.push_back(encode_bound(bind, batch[i], masks[i], gat_table));
    out.fused.push_back(fuse_sample(bind, out.encoded.back()));
  }

  for (int a = 0; a < active; ++a) {
    std::vector<Var> parts;
    parts.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) parts.push_back(out.encoded[i][a].h_t);
    out.h_t[a] = tape.concat_rows(parts);
  }

  // masked-token logits; streams share heads per target vocabulary
  for (int a = 0; a < active; ++a) {
    MlmStream stream;
    std::vector<Var> rows;
    for (size_t i = 0; i < batch.size(); ++i) {
      const auto& units = masks[i].units[a];
      if (units.empty()) continue;
      const auto& targets = (a == kRoute || a == kGpsRoute) ? batch[i].route_targets : batch[i].cell_targets;
      std::vector<int> positions;
      for (int u : units) {
        if (targets[u] < 0) {
          out.dropped_targets++;
          continue;
        }
        positions.push_back(u + 1);  // skip the trajectory-level token
        stream.targets.push_back(targets[u]);
      }
      if (!positions.empty()) rows.push_back(tape.gather_rows(out.fused[i][a], positions));
    }
    if (!rows.empty()) {
      Var gathered = tape.concat_rows(rows);
      const bool seg = a == kRoute || a == kGpsRoute;
      stream.logits = tape.linear(gathered, bind(seg ? "mlm.seg.w" : "mlm.cell.w"),
                                  bind(seg ? "mlm.seg.b" : "mlm.cell.b"));
    }
    out.mlm.push_back(std::move(stream));
  }
  return out;
}

// ---------------------------------------------------------------------------
// destination truncation
// ---------------------------------------------------------------------------

bool truncate_destination(views::Sample& sample, int* label_out) {
  if (sample.grid.size() < 2) return false;
  const views::GridEntry last = sample.grid.entries.back();
  const double t_star = last.arrival_time;

  size_t n_points = 0;
  while (n_points < sample.gps.points.size() && sample.gps.points[n_points].t < t_star) ++n_points;
  size_t n_route = 0;
  while (n_route < sample.route.size() && sample.route.entries[n_route].arrival_time < t_star) ++n_route;
  if (n_points < 1 || n_route < 1) return false;

  sample.grid.entries.pop_back();
  sample.gps.points.resize(n_points);
  sample.route.entries.resize(n_route);
  sample.b_route.unit_of_point.resize(n_points);
  sample.b_grid.unit_of_point.resize(n_points);
  sample.b_route.unit_count = static_cast<int>(n_route);
  sample.b_grid.unit_count = static_cast<int>(sample.grid.size());
  if (label_out) *label_out = last.cell_id;
  return true;
}

}  // namespace trajview::model
