#include "trajview/pipeline/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace trajview::pipeline {

namespace {

constexpr char kMagic[4] = {'T', 'V', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& is) {
  const auto len = take<uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

void put_f32_tensor(std::ostream& os, const engine::Tensor& t) {
  put<int32_t>(os, t.rows());
  put<int32_t>(os, t.cols());
  std::vector<float> buf(t.numel());
  for (size_t i = 0; i < t.numel(); ++i) buf[i] = static_cast<float>(t[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

engine::Tensor take_f32_tensor(std::istream& is) {
  const auto rows = take<int32_t>(is);
  const auto cols = take<int32_t>(is);
  engine::Tensor t(rows, cols);
  std::vector<float> buf(t.numel());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor");
  for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(buf[i]);
  return t;
}

void put_ids(std::ostream& os, const std::vector<int>& ids) {
  put<uint32_t>(os, static_cast<uint32_t>(ids.size()));
  for (int id : ids) put<int32_t>(os, id);
}

std::vector<int> take_ids(std::istream& is) {
  const auto n = take<uint32_t>(is);
  std::vector<int> ids(n);
  for (auto& id : ids) id = take<int32_t>(is);
  return ids;
}

}  // namespace

void Checkpoint::save(const std::string& path, const model::MultiViewModel& model, const TrainConfig& cfg,
                      const engine::AdamW* opt, int epoch, double best_val) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  os.write(kMagic, 4);
  put<uint32_t>(os, kVersion);
  put_string(os, cfg.to_text());
  put_ids(os, model.segment_vocab().ids);
  put_ids(os, model.cell_vocab().ids);
  const views::GridSpec& g = model.grid();
  put<double>(os, g.x_min);
  put<double>(os, g.y_min);
  put<double>(os, g.cell_size);
  put<int32_t>(os, g.rows);
  put<int32_t>(os, g.cols);
  const views::DatasetStats& st = model.stats();
  for (double v : {st.x_min, st.y_min, st.x_max, st.y_max, st.dt_mean, st.dt_std, st.speed_mean, st.speed_std,
                   st.dwell_scale})
    put<double>(os, v);

  auto params = model.params().all();
  put<uint32_t>(os, static_cast<uint32_t>(params.size()));
  for (const engine::Parameter* p : params) {
    put_string(os, p->name);
    put<uint8_t>(os, p->trainable ? 1 : 0);
    put_f32_tensor(os, p->value);
  }

  put<uint8_t>(os, opt ? 1 : 0);
  if (opt) {
    put<uint64_t>(os, opt->step_count());
    const auto& state = const_cast<engine::AdamW*>(opt)->state();
    put<uint32_t>(os, static_cast<uint32_t>(state.size()));
    for (const auto& [name, mo] : state) {
      put_string(os, name);
      put_f32_tensor(os, mo.m);
      put_f32_tensor(os, mo.v);
    }
  }
  put<int32_t>(os, epoch);
  put<double>(os, best_val);
}

std::unique_ptr<model::MultiViewModel> Checkpoint::load(const std::string& path,
                                                        const synth::RoadNetwork& network, Checkpoint* meta,
                                                        engine::AdamW* opt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  if (take<uint32_t>(is) != kVersion) throw std::runtime_error("checkpoint: unsupported version");

  Checkpoint ck;
  ck.config = TrainConfig::from_text(take_string(is));
  ck.segment_vocab = views::Vocab::from_ids(take_ids(is));
  ck.cell_vocab = views::Vocab::from_ids(take_ids(is));
  ck.grid.x_min = take<double>(is);
  ck.grid.y_min = take<double>(is);
  ck.grid.cell_size = take<double>(is);
  ck.grid.rows = take<int32_t>(is);
  ck.grid.cols = take<int32_t>(is);
  ck.stats.x_min = take<double>(is);
  ck.stats.y_min = take<double>(is);
  ck.stats.x_max = take<double>(is);
  ck.stats.y_max = take<double>(is);
  ck.stats.dt_mean = take<double>(is);
  ck.stats.dt_std = take<double>(is);
  ck.stats.speed_mean = take<double>(is);
  ck.stats.speed_std = take<double>(is);
  ck.stats.dwell_scale = take<double>(is);

  auto model = std::make_unique<model::MultiViewModel>(ck.config.model_config(), network, ck.segment_vocab,
                                                       ck.cell_vocab, ck.grid, ck.stats);
  const auto n_params = take<uint32_t>(is);
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = take_string(is);
    const bool trainable = take<uint8_t>(is) != 0;
    engine::Tensor value = take_f32_tensor(is);
    // auxiliary parameters (e.g. a supervised head) are recreated as stored
    if (!model->params().contains(name))
      model->params().create(name, value.rows(), value.cols(), engine::Init::Zeros, trainable);
    engine::Parameter& p = model->params().get(name);
    if (!p.value.same_shape(value))
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": " + p.value.shape_str() +
                               " vs " + value.shape_str());
    p.value = std::move(value);
    p.trainable = trainable;
  }

  if (take<uint8_t>(is) != 0) {
    const auto steps = take<uint64_t>(is);
    const auto n_entries = take<uint32_t>(is);
    if (opt) {
      opt->set_step_count(steps);
      opt->state().clear();
    }
    for (uint32_t i = 0; i < n_entries; ++i) {
      const std::string name = take_string(is);
      engine::AdamW::Moments mo;
      mo.m = take_f32_tensor(is);
      mo.v = take_f32_tensor(is);
      if (opt) opt->state().emplace(name, std::move(mo));
    }
  }
  ck.epoch = take<int32_t>(is);
  ck.best_val = take<double>(is);
  if (meta) *meta = std::move(ck);
  return model;
}

}  // namespace trajview::pipeline
