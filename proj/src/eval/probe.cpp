#include "trajview/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "trajview/engine/optim.hpp"
#include "trajview/engine/params.hpp"
#include "trajview/engine/rng.hpp"
#include "trajview/engine/tape.hpp"

namespace trajview::eval {

using engine::Tape;
using engine::Tensor;
using engine::Var;

namespace {

struct Head {
  engine::ParamStore store;
  engine::AdamW opt;
  int in_dim, out_dim;

  Head(int in, int hidden, int out, const ProbeConfig& cfg)
      : store(cfg.seed), opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}), in_dim(in), out_dim(out) {
    store.create("w1", in, hidden, engine::Init::GlorotUniform);
    store.create("b1", 1, hidden, engine::Init::Zeros);
    store.create("w2", hidden, out, engine::Init::GlorotUniform);
    store.create("b2", 1, out, engine::Init::Zeros);
  }

  Var forward(Tape& tape, Var x) {
    Var h = tape.relu(tape.linear(x, store.bind(tape, "w1"), store.bind(tape, "b1")));
    return tape.linear(h, store.bind(tape, "w2"), store.bind(tape, "b2"));
  }

  Tensor gather(const Tensor& features, const std::vector<int>& rows) {
    Tensor out(static_cast<int>(rows.size()), features.cols());
    for (size_t i = 0; i < rows.size(); ++i)
      for (int c = 0; c < features.cols(); ++c) out.at(static_cast<int>(i), c) = features.at(rows[i], c);
    return out;
  }

  template <typename LossFn>
  void fit(const Tensor& features, const std::vector<int>& train_idx, const ProbeConfig& cfg, LossFn&& loss) {
    std::vector<int> order = train_idx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      auto rng = engine::make_rng(engine::mix_seed({cfg.seed, 0x70726f6265ull, static_cast<uint64_t>(epoch)}));
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
        const size_t end = std::min(order.size(), at + cfg.batch_size);
        std::vector<int> rows(order.begin() + at, order.begin() + end);
        Tape tape;
        Var x = tape.constant(gather(features, rows));
        Var out = forward(tape, x);
        Var l = loss(tape, out, rows);
        tape.backward(l);
        store.zero_grads();
        store.collect_grads(tape);
        opt.step(store);
      }
    }
  }

  Tensor predict_all(const Tensor& features) {
    Tape tape;
    Var out = forward(tape, tape.constant(features));
    Tensor result = tape.value(out);
    store.collect_grads(tape);
    store.zero_grads();
    return result;
  }
};

}  // namespace

std::vector<std::vector<double>> probe_classify(const Tensor& features, const std::vector<int>& labels,
                                                const std::vector<int>& train_idx, int n_classes,
                                                const ProbeConfig& cfg) {
  if (static_cast<int>(labels.size()) != features.rows())
    throw std::invalid_argument("probe_classify: one label per feature row required");
  Head head(features.cols(), cfg.hidden, n_classes, cfg);
  head.fit(features, train_idx, cfg, [&](Tape& tape, Var out, const std::vector<int>& rows) {
    std::vector<int> t;
    t.reserve(rows.size());
    for (int r : rows) t.push_back(labels[r]);
    return tape.softmax_xent_rows(out, t);
  });
  Tensor scores = head.predict_all(features);
  std::vector<std::vector<double>> result(features.rows());
  for (int r = 0; r < features.rows(); ++r) {
    result[r].resize(n_classes);
    for (int c = 0; c < n_classes; ++c) result[r][c] = scores.at(r, c);
  }
  return result;
}

std::vector<double> probe_regress(const Tensor& features, const std::vector<double>& targets,
                                  const std::vector<int>& train_idx, const ProbeConfig& cfg) {
  if (static_cast<int>(targets.size()) != features.rows())
    throw std::invalid_argument("probe_regress: one target per feature row required");
  if (train_idx.empty()) throw std::invalid_argument("probe_regress: empty train set");
  double mean = 0, sq = 0;
  for (int r : train_idx) {
    mean += targets[r];
    sq += targets[r] * targets[r];
  }
  mean /= train_idx.size();
  const double stdev = std::sqrt(std::max(1e-12, sq / train_idx.size() - mean * mean));

  Head head(features.cols(), cfg.hidden, 1, cfg);
  head.fit(features, train_idx, cfg, [&](Tape& tape, Var out, const std::vector<int>& rows) {
    Tensor t(static_cast<int>(rows.size()), 1);
    for (size_t i = 0; i < rows.size(); ++i) t.at(static_cast<int>(i), 0) = (targets[rows[i]] - mean) / stdev;
    Var diff = tape.sub(out, tape.constant(t));
    return tape.mean_all(tape.mul(diff, diff));
  });
  Tensor preds = head.predict_all(features);
  std::vector<double> result(features.rows());
  for (int r = 0; r < features.rows(); ++r) result[r] = preds.at(r, 0) * stdev + mean;
  return result;
}

}  // namespace trajview::eval
