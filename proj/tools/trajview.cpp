// Command-line front end: synthesize a city, derive views, pretrain,
// export embeddings, probe downstream tasks, and run ablations.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "trajview/eval/tasks.hpp"
#include "trajview/pipeline/checkpoint.hpp"
#include "trajview/pipeline/config.hpp"
#include "trajview/pipeline/export.hpp"
#include "trajview/pipeline/train.hpp"
#include "trajview/synth/city.hpp"
#include "trajview/views/dataset.hpp"

namespace fs = std::filesystem;
using namespace trajview;
using nlohmann::json;

namespace {

struct IoPaths {
  std::string data_dir;
  std::string network() const { return data_dir + "/network.json"; }
  std::string pois() const { return data_dir + "/pois.csv"; }
  std::string traj() const { return data_dir + "/traj.jsonl"; }
  std::string views() const { return data_dir + "/views.jsonl"; }
  std::string meta() const { return data_dir + "/dataset_meta.json"; }
};

pipeline::TrainConfig load_train_config(const std::string& config_file,
                                        const std::vector<std::string>& overrides, uint64_t seed,
                                        bool seed_given) {
  pipeline::TrainConfig cfg;
  if (!config_file.empty()) cfg = pipeline::TrainConfig::from_file(config_file);
  std::map<std::string, std::string> kv;
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value, got " + o);
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  cfg.apply(kv);
  if (seed_given) cfg.seed = seed;
  return cfg;
}

json metrics_json(const eval::TaskMetrics& tm) {
  json j;
  j["metrics"] = tm.values;
  j["train_count"] = tm.train_count;
  j["test_count"] = tm.test_count;
  j["excluded"] = tm.excluded;
  j["seed"] = tm.seed;
  return j;
}

json run_probes(model::MultiViewModel& m, const views::Dataset& ds, const synth::RoadNetwork& net,
                const eval::ProbeConfig& pc, const std::string& out_dir, bool with_control) {
  auto static_table = pipeline::export_static_segment_embeddings(m, ds);
  auto time_masked = pipeline::export_trajectory_embeddings(m, ds, pipeline::EmbeddingMode::kTimeMasked);
  auto dest = pipeline::export_trajectory_embeddings(m, ds, pipeline::EmbeddingMode::kDestinationTruncated);
  auto speeds = eval::mean_segment_speeds(ds);

  auto csv = [&](const std::string& name) { return out_dir.empty() ? "" : out_dir + "/pred_" + name + ".csv"; };
  json tasks;
  tasks["road_label"] = metrics_json(eval::probe_road_label(static_table, net, pc, csv("road_label")));
  tasks["road_speed"] = metrics_json(eval::probe_road_speed(static_table, speeds, pc, csv("road_speed")));
  tasks["travel_time"] = metrics_json(eval::probe_travel_time(time_masked, pc, csv("travel_time")));
  tasks["destination_grid"] =
      metrics_json(eval::probe_destination(dest, m.cell_vocab(), pc, csv("destination_grid")));

  if (with_control) {
    auto rseg = eval::random_segment_table(static_table, pc.seed);
    auto rtime = eval::random_trajectory_table(time_masked, pc.seed);
    auto rdest = eval::random_trajectory_table(dest, pc.seed);
    tasks["road_label"]["control"] = eval::probe_road_label(rseg, net, pc).values;
    tasks["road_speed"]["control"] = eval::probe_road_speed(rseg, speeds, pc).values;
    tasks["travel_time"]["control"] = eval::probe_travel_time(rtime, pc).values;
    tasks["destination_grid"]["control"] = eval::probe_destination(rdest, m.cell_vocab(), pc).values;
  }
  return tasks;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-view trajectory representation learning"};
  app.require_subcommand(1);

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "generate a synthetic city and trips");
  std::string gen_out = "data";
  uint64_t gen_seed = 1;
  int rows = 14, cols = 14, zones = 9, pois_per_zone = 40, n_traj = 2600;
  double drop = 0.08, spacing = 200.0, sample_period = 5.0, noise = 10.0, gen_cell = 250.0;
  int min_od_blocks = 12;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--rows", rows);
  gen->add_option("--cols", cols);
  gen->add_option("--drop", drop, "fraction of removable edges to delete");
  gen->add_option("--spacing", spacing, "block size, meters");
  gen->add_option("--zones", zones, "poi functional zones");
  gen->add_option("--pois-per-zone", pois_per_zone);
  gen->add_option("--n", n_traj, "number of trajectories");
  gen->add_option("--sample-period", sample_period, "gps sampling period, seconds");
  gen->add_option("--noise", noise, "gps positional noise sigma, meters");
  gen->add_option("--cell-size", gen_cell, "grid cell for the recorded destination");
  gen->add_option("--min-od-blocks", min_od_blocks, "minimum origin-destination distance in blocks");

  // ---- prep ----
  auto* prep = app.add_subcommand("prep", "derive route/grid views, filter and split");
  std::string prep_data = "data";
  uint64_t prep_seed = 1;
  double sigma = 15.0, penalty = 1.0, prep_cell = 250.0;
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
  prep->add_option("--data", prep_data, "directory with gen outputs");
  prep->add_option("--seed", prep_seed, "split seed");
  prep->add_option("--sigma", sigma, "map matching emission sigma, meters");
  prep->add_option("--penalty", penalty, "map matching transition penalty");
  prep->add_option("--cell-size", prep_cell, "grid cell size, meters");
  prep->add_option("--train", train_frac);
  prep->add_option("--val", val_frac);
  prep->add_option("--test", test_frac);

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "pretrain (or train from scratch with pretrain=0)");
  std::string pre_data = "data", pre_out = "run", pre_config;
  std::vector<std::string> pre_set;
  uint64_t pre_seed = 1;
  bool pre_seed_given = false;
  pre->add_option("--data", pre_data);
  pre->add_option("--out", pre_out, "output directory for checkpoint.bin and metrics.csv");
  pre->add_option("--config", pre_config, "key=value config file");
  pre->add_option("--set", pre_set, "config overrides, key=value");
  pre->add_option("--seed", pre_seed)->each([&](const std::string&) { pre_seed_given = true; });

  // ---- export ----
  auto* exp = app.add_subcommand("export", "write embedding tables from a checkpoint");
  std::string exp_data = "data", exp_ck = "run/checkpoint.bin", exp_out = "run";
  std::string exp_mode = "full";
  bool exp_static = false;
  exp->add_option("--data", exp_data);
  exp->add_option("--checkpoint", exp_ck);
  exp->add_option("--out", exp_out);
  exp->add_option("--mode", exp_mode, "full | time_masked | destination_truncated");
  exp->add_flag("--static", exp_static, "also write the static segment table");
  uint64_t exp_seed = 1;
  exp->add_option("--seed", exp_seed, "unused; accepted for uniformity");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "frozen-probe evaluation with a random control");
  std::string ev_data = "data", ev_ck = "run/checkpoint.bin", ev_out = "run";
  uint64_t ev_seed = 1;
  int probe_epochs = 50;
  ev->add_option("--data", ev_data);
  ev->add_option("--checkpoint", ev_ck);
  ev->add_option("--out", ev_out);
  ev->add_option("--seed", ev_seed, "probe seed");
  ev->add_option("--probe-epochs", probe_epochs);

  // ---- ablate ----
  auto* ab = app.add_subcommand("ablate", "pretrain and probe the ablation variants");
  std::string ab_data = "data", ab_out = "ablation", ab_config;
  std::vector<std::string> ab_set;
  std::vector<uint64_t> ab_seeds{1, 2, 3};
  ab->add_option("--data", ab_data);
  ab->add_option("--out", ab_out);
  ab->add_option("--config", ab_config);
  ab->add_option("--set", ab_set);
  ab->add_option("--seeds", ab_seeds, "one run per seed");
  uint64_t ab_seed = 1;
  ab->add_option("--seed", ab_seed, "alias for a single-seed run")
      ->each([&](const std::string& v) { ab_seeds = {std::stoull(v)}; });
  int ab_probe_epochs = 50;
  ab->add_option("--probe-epochs", ab_probe_epochs);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      fs::create_directories(gen_out);
      auto net = synth::generate_road_network(gen_seed, rows, cols, drop, spacing);
      auto pois = synth::generate_pois(net, gen_seed, zones, pois_per_zone);
      synth::SimulateConfig sc;
      sc.sample_period = sample_period;
      sc.noise_sigma = noise;
      sc.min_od_blocks = min_od_blocks;
      sc.grid_cell_size = gen_cell;
      auto trips = synth::simulate_trajectories(net, gen_seed, n_traj, sc);
      IoPaths io{gen_out};
      synth::save_network_json(net, io.network());
      synth::save_pois_csv(pois, io.pois());
      synth::save_trajectories_jsonl(trips, io.traj());
      std::cout << "wrote " << net.size() << " segments, " << pois.size() << " pois, " << trips.size()
                << " trajectories to " << gen_out << "\n";
    }

    if (*prep) {
      IoPaths io{prep_data};
      auto net = synth::load_network_json(io.network());
      auto pois = synth::load_pois_csv(io.pois());
      auto trips = synth::load_trajectories_jsonl(io.traj());
      views::PrepOptions opt;
      opt.match.sigma = sigma;
      opt.match.transition_penalty = penalty;
      opt.cell_size = prep_cell;
      opt.train_frac = train_frac;
      opt.val_frac = val_frac;
      opt.test_frac = test_frac;
      opt.seed = prep_seed;
      auto ds = views::prepare_dataset(net, pois, trips, opt);
      if (ds.samples.empty()) {
        std::cerr << "prep: no samples survived filtering: " << ds.filter_report.to_string() << "\n";
        return 1;
      }
      views::save_dataset(ds, io.views(), io.meta());
      std::cout << "prep: " << ds.filter_report.to_string() << "; vocab segments=" << ds.segment_vocab.size()
                << " cells=" << ds.cell_vocab.size() << "\n";
    }

    if (*pre) {
      IoPaths io{pre_data};
      auto net = synth::load_network_json(io.network());
      auto ds = views::load_dataset(io.views(), io.meta());
      auto cfg = load_train_config(pre_config, pre_set, pre_seed, pre_seed_given);
      fs::create_directories(pre_out);
      auto res = pipeline::run_training(cfg, ds, net, pre_out + "/checkpoint.bin", pre_out + "/metrics.csv");
      std::cout << (cfg.pretrain ? "pretrain" : "scratch") << ": best epoch " << res.best_epoch
                << " val " << res.best_val << " steps " << res.total_steps << "\n";
    }

    if (*exp) {
      IoPaths io{exp_data};
      auto net = synth::load_network_json(io.network());
      auto ds = views::load_dataset(io.views(), io.meta());
      pipeline::Checkpoint meta;
      auto m = pipeline::Checkpoint::load(exp_ck, net, &meta);
      fs::create_directories(exp_out);
      if (exp_static) {
        auto table = pipeline::export_static_segment_embeddings(*m, ds);
        pipeline::save_segment_table_csv(table, exp_out + "/segment_static.csv");
        std::cout << "wrote " << table.segment_ids.size() << " static segment vectors\n";
      }
      pipeline::EmbeddingMode mode = pipeline::EmbeddingMode::kFull;
      if (exp_mode == "time_masked")
        mode = pipeline::EmbeddingMode::kTimeMasked;
      else if (exp_mode == "destination_truncated")
        mode = pipeline::EmbeddingMode::kDestinationTruncated;
      else if (exp_mode != "full")
        throw CLI::ValidationError("--mode must be full, time_masked or destination_truncated");
      auto table = pipeline::export_trajectory_embeddings(*m, ds, mode);
      pipeline::save_trajectory_table_csv(table, exp_out + "/traj_" + exp_mode + ".csv");
      std::cout << "wrote " << table.rows.size() << " trajectory vectors (" << table.skipped
                << " skipped)\n";
    }

    if (*ev) {
      IoPaths io{ev_data};
      auto net = synth::load_network_json(io.network());
      auto ds = views::load_dataset(io.views(), io.meta());
      pipeline::Checkpoint meta;
      auto m = pipeline::Checkpoint::load(ev_ck, net, &meta);
      fs::create_directories(ev_out);
      eval::ProbeConfig pc;
      pc.seed = ev_seed;
      pc.epochs = probe_epochs;
      json report;
      report["seed"] = ev_seed;
      report["checkpoint"] = ev_ck;
      report["tasks"] = run_probes(*m, ds, net, pc, ev_out, true);
      std::ofstream f(ev_out + "/report.json");
      f << report.dump(2) << "\n";
      std::cout << report["tasks"].dump(2) << "\n";
    }

    if (*ab) {
      IoPaths io{ab_data};
      auto net = synth::load_network_json(io.network());
      auto ds = views::load_dataset(io.views(), io.meta());
      fs::create_directories(ab_out);
      const std::vector<std::pair<std::string, std::string>> variants = {
          {"full", ""},
          {"no_inter_modal", "no_inter_modal"},
          {"no_grid_view", "no_grid_view"},
          {"no_align_loss", "no_align_loss"},
          {"no_mlm_loss", "no_mlm_loss"}};
      json table;
      for (const auto& [name, flag] : variants) {
        for (uint64_t seed : ab_seeds) {
          auto cfg = load_train_config(ab_config, ab_set, seed, true);
          if (!flag.empty()) cfg.apply({{flag, "1"}});
          const std::string ck = ab_out + "/" + name + "_s" + std::to_string(seed) + ".bin";
          auto res = pipeline::run_training(cfg, ds, net, ck, "");
          pipeline::Checkpoint meta;
          auto m = pipeline::Checkpoint::load(ck, net, &meta);
          eval::ProbeConfig pc;
          pc.seed = seed;
          pc.epochs = ab_probe_epochs;
          table[name]["seed_" + std::to_string(seed)] = run_probes(*m, ds, net, pc, "", false);
          std::cout << "ablate " << name << " seed " << seed << ": val " << res.best_val << "\n";
        }
      }
      std::ofstream f(ab_out + "/ablation.json");
      f << table.dump(2) << "\n";
      std::cout << "wrote " << ab_out << "/ablation.json\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
