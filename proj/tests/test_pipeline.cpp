#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "trajview/model/objectives.hpp"
#include "trajview/pipeline/checkpoint.hpp"
#include "trajview/pipeline/config.hpp"
#include "trajview/pipeline/export.hpp"
#include "trajview/pipeline/train.hpp"

using namespace trajview;
using namespace trajview::pipeline;

namespace {

struct Fixture {
  synth::RoadNetwork net;
  views::Dataset ds;

  Fixture() {
    net = synth::generate_road_network(3, 5, 5, 0.0);
    auto pois = synth::generate_pois(net, 5, 3, 25);
    synth::SimulateConfig sc;
    sc.min_od_blocks = 5;
    auto trips = synth::simulate_trajectories(net, 7, 60, sc);
    views::PrepOptions opt;
    opt.cell_size = 180.0;
    opt.limits = {3, 100, 2, 100, 2, 256};
    opt.seed = 5;
    ds = views::prepare_dataset(net, pois, trips, opt);
    REQUIRE(ds.samples.size() >= 40);
  }

  TrainConfig tiny_config() const {
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.depth = 1;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 3;
    return cfg;
  }
};

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config: text round-trip and overrides") {
  TrainConfig cfg;
  cfg.dim = 48;
  cfg.lr = 5e-4;
  cfg.no_grid_view = true;
  cfg.seed = 99;
  TrainConfig back = TrainConfig::from_text(cfg.to_text());
  CHECK(back.dim == 48);
  CHECK(back.lr == 5e-4);
  CHECK(back.no_grid_view);
  CHECK(back.seed == 99);
  CHECK(back.to_text() == cfg.to_text());

  back.apply({{"epochs", "7"}, {"no_grid_view", "false"}, {"tau", "0.1"}});
  CHECK(back.epochs == 7);
  CHECK_FALSE(back.no_grid_view);
  CHECK(back.tau == 0.1);
  CHECK_THROWS_AS(back.apply({{"bogus", "1"}}), std::invalid_argument);

  TrainConfig fromtext = TrainConfig::from_text("dim=16\n# comment\n  lr = 0.01  \n");
  CHECK(fromtext.dim == 16);
  CHECK(fromtext.lr == 0.01);
}

TEST_CASE("training: zero learning rate leaves parameters untouched") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 1;

  model::MultiViewModel before(cfg.model_config(), fx.net, fx.ds.segment_vocab, fx.ds.cell_vocab, fx.ds.grid,
                               fx.ds.stats);
  run_training(cfg, fx.ds, fx.net, "lr0_ck.bin", "");
  Checkpoint meta;
  auto after = Checkpoint::load("lr0_ck.bin", fx.net, &meta);
  auto pb = before.params().all();
  auto pa = after->params().all();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value.vec() == pb[i]->value.vec());
  }
  std::remove("lr0_ck.bin");
}

TEST_CASE("training: short run decreases loss and logs deterministically") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  cfg.epochs = 4;
  auto r1 = run_training(cfg, fx.ds, fx.net, "smoke_ck.bin", "smoke_metrics_a.csv");
  CHECK(r1.total_steps > 0);
  CHECK(r1.skipped_steps == 0);
  CHECK(r1.epoch_train_loss.back() < r1.epoch_train_loss.front());
  CHECK(r1.best_epoch >= 0);

  auto r2 = run_training(cfg, fx.ds, fx.net, "", "smoke_metrics_b.csv");
  CHECK(file_bytes("smoke_metrics_a.csv") == file_bytes("smoke_metrics_b.csv"));
  CHECK(r1.epoch_val_loss == r2.epoch_val_loss);
  std::remove("smoke_ck.bin");
  std::remove("smoke_metrics_a.csv");
  std::remove("smoke_metrics_b.csv");
}

TEST_CASE("checkpoint: save-load round trip reproduces forward passes bit-exactly") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  auto res = run_training(cfg, fx.ds, fx.net, "rt_ck.bin", "");
  CHECK(res.total_steps > 0);

  Checkpoint meta;
  engine::AdamW opt1({cfg.lr});
  auto m1 = Checkpoint::load("rt_ck.bin", fx.net, &meta, &opt1);
  engine::AdamW opt2({cfg.lr});
  auto m2 = Checkpoint::load("rt_ck.bin", fx.net, &meta, &opt2);
  CHECK(meta.config.to_text() == cfg.to_text());
  CHECK(opt1.step_count() > 0);
  CHECK(opt1.step_count() <= res.total_steps);  // best-epoch snapshot

  auto in1 = m1->build_input(fx.ds.samples[0], model::InputMode::kPlain);
  engine::Tape t1, t2;
  auto e1 = m1->encode_sample(t1, in1, model::MaskSet{});
  auto e2 = m2->encode_sample(t2, in1, model::MaskSet{});
  for (int a = 0; a < model::kStreamCount; ++a)
    CHECK(t1.value(e1[a].h_s).vec() == t2.value(e2[a].h_s).vec());

  // save the loaded model again; the file must be identical
  Checkpoint::save("rt_ck2.bin", *m1, meta.config, &opt1, meta.epoch, meta.best_val);
  CHECK(file_bytes("rt_ck.bin") == file_bytes("rt_ck2.bin"));
  std::remove("rt_ck.bin");
  std::remove("rt_ck2.bin");
}

TEST_CASE("export: static table covers train-split segments and ignores order") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  model::MultiViewModel m(cfg.model_config(), fx.net, fx.ds.segment_vocab, fx.ds.cell_vocab, fx.ds.grid,
                          fx.ds.stats);
  auto table = export_static_segment_embeddings(m, fx.ds);
  std::set<int> expect;
  for (const auto& s : fx.ds.samples)
    if (s.split == views::kTrain)
      for (const auto& e : s.route.entries) expect.insert(e.segment_id);
  CHECK(table.segment_ids == std::vector<int>(expect.begin(), expect.end()));
  CHECK(table.dim() == cfg.dim);

  // shuffling the dataset order leaves the averages in place
  views::Dataset shuffled = fx.ds;
  std::reverse(shuffled.samples.begin(), shuffled.samples.end());
  auto table2 = export_static_segment_embeddings(m, shuffled);
  REQUIRE(table2.segment_ids == table.segment_ids);
  for (size_t i = 0; i < table.vectors.size(); ++i)
    for (size_t c = 0; c < table.vectors[i].size(); ++c)
      CHECK(table2.vectors[i][c] == doctest::Approx(table.vectors[i][c]).epsilon(1e-6));

  // a segment seen once equals its single token: use a probe model run
  // indirectly via counts — segments covered exactly once exist rarely in
  // this fixture, so assert instead that every vector is finite
  for (const auto& v : table.vectors)
    for (double x : v) CHECK(std::isfinite(x));
}

TEST_CASE("export: trajectory vectors have the stream-concatenated width") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  model::MultiViewModel m(cfg.model_config(), fx.net, fx.ds.segment_vocab, fx.ds.cell_vocab, fx.ds.grid,
                          fx.ds.stats);
  auto table = export_trajectory_embeddings(m, fx.ds, EmbeddingMode::kFull);
  CHECK(table.rows.size() == fx.ds.samples.size());
  CHECK(table.dim() == 4 * cfg.dim);

  TrainConfig ng = cfg;
  ng.no_grid_view = true;
  model::MultiViewModel m2(ng.model_config(), fx.net, fx.ds.segment_vocab, fx.ds.cell_vocab, fx.ds.grid,
                           fx.ds.stats);
  auto table2 = export_trajectory_embeddings(m2, fx.ds, EmbeddingMode::kFull);
  CHECK(table2.dim() == 2 * cfg.dim);
}

TEST_CASE("export: time-masked embeddings ignore a global timestamp shift") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  model::MultiViewModel m(cfg.model_config(), fx.net, fx.ds.segment_vocab, fx.ds.cell_vocab, fx.ds.grid,
                          fx.ds.stats);
  views::Dataset shifted = fx.ds;
  for (auto& s : shifted.samples) {
    for (auto& p : s.gps.points) p.t += 86400.0;
    for (auto& e : s.route.entries) e.arrival_time += 86400.0;
    for (auto& e : s.grid.entries) e.arrival_time += 86400.0;
  }
  auto a = export_trajectory_embeddings(m, fx.ds, EmbeddingMode::kTimeMasked);
  auto b = export_trajectory_embeddings(m, shifted, EmbeddingMode::kTimeMasked);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].vec == b.rows[i].vec);

  auto c = export_trajectory_embeddings(m, shifted, EmbeddingMode::kFull);
  bool any_diff = false;
  for (size_t i = 0; i < a.rows.size() && !any_diff; ++i) any_diff = c.rows[i].vec != a.rows[i].vec;
  CHECK(any_diff);
}

TEST_CASE("export: destination truncation keeps labels out of the inputs") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  model::MultiViewModel m(cfg.model_config(), fx.net, fx.ds.segment_vocab, fx.ds.cell_vocab, fx.ds.grid,
                          fx.ds.stats);
  auto table = export_trajectory_embeddings(m, fx.ds, EmbeddingMode::kDestinationTruncated);
  CHECK(table.rows.size() + table.skipped == fx.ds.samples.size());
  for (const auto& row : table.rows) CHECK(row.dest_label >= 0);

  save_trajectory_table_csv(table, "traj_table_test.csv");
  std::ifstream f("traj_table_test.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header.rfind("traj_id,split,duration,dest_label", 0) == 0);
  std::remove("traj_table_test.csv");
}

TEST_CASE("training: scratch mode optimizes the supervised objective") {
  Fixture fx;
  TrainConfig cfg = fx.tiny_config();
  cfg.pretrain = false;
  cfg.epochs = 3;
  auto res = run_training(cfg, fx.ds, fx.net, "scratch_ck.bin", "scratch_metrics.csv");
  CHECK(res.total_steps > 0);
  CHECK(res.epoch_train_loss.back() < res.epoch_train_loss.front());
  CHECK(res.best_val < 1e9);
  std::ifstream f("scratch_metrics.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "step,epoch,split,mse_z,mae_s,mse_z2");
  // the checkpoint carries the head parameters
  Checkpoint meta;
  auto m = Checkpoint::load("scratch_ck.bin", fx.net, &meta);
  CHECK(m->params().contains("head.w1"));  // supervised head rides along
  std::remove("scratch_ck.bin");
  std::remove("scratch_metrics.csv");
}
