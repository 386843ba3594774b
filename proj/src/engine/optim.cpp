#include "trajview/engine/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace trajview::engine {

bool AdamW::step(ParamStore& store) {
  if (cfg_.lr < 0.0) throw std::invalid_argument("AdamW: negative learning rate");
  auto params = store.all();
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (size_t i = 0; i < p->grad.numel(); ++i)
      if (!std::isfinite(p->grad[i])) return false;
  }

  const uint64_t t = ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));

  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto it = state_.find(p->name);
    if (it == state_.end()) {
      Moments mo;
      mo.m = Tensor(p->value.rows(), p->value.cols());
      mo.v = Tensor(p->value.rows(), p->value.cols());
      it = state_.emplace(p->name, std::move(mo)).first;
    }
    Moments& mo = it->second;
    if (!mo.m.same_shape(p->value))
      throw std::invalid_argument("AdamW: stale state shape for " + p->name);
    for (size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      double theta = p->value[i];
      theta -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      theta -= cfg_.lr * cfg_.weight_decay * p->value[i];
      p->value[i] = theta;
    }
    snap_f32(p->value);
    snap_f32(mo.m);
    snap_f32(mo.v);
  }
  return true;
}

}  // namespace trajview::engine
