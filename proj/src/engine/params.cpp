#include "trajview/engine/params.hpp"

#include <cmath>
#include <stdexcept>

namespace trajview::engine {

void snap_f32(Tensor& t) {
  for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
}

Parameter& ParamStore::create(const std::string& name, int rows, int cols, Init init, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter name " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(rows, cols);
  p->grad = Tensor(rows, cols);
  p->trainable = trainable;
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      p->value.fill(1.0);
      break;
    case Init::GlorotUniform: {
      const double limit = std::sqrt(6.0 / (rows + cols));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (size_t i = 0; i < p->value.numel(); ++i) p->value[i] = dist(rng_);
      break;
    }
    case Init::Normal02: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (size_t i = 0; i < p->value.numel(); ++i) p->value[i] = dist(rng_);
      break;
    }
  }
  snap_f32(p->value);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return *params_[it->second];
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->grad.fill(0.0);
}

Var ParamStore::bind(Tape& tape, const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
  Var v = tape.leaf(params_[it->second]->value);
  bound_.emplace_back(it->second, v);
  return v;
}

void ParamStore::collect_grads(Tape& tape) {
  for (auto& [idx, var] : bound_) {
    Tensor g = tape.grad(var);
    Tensor& acc = params_[idx]->grad;
    for (size_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
  }
  bound_.clear();
}

}  // namespace trajview::engine
