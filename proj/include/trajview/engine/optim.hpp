#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "trajview/engine/params.hpp"
#include "trajview/engine/tensor.hpp"

namespace trajview::engine {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
/// Parameter and moment values are snapped to float32 resolution after each
/// step so checkpoints (which store float32) reproduce them exactly.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  /// Applies one update over all trainable parameters in the store.
  /// If any gradient entry is non-finite the step is skipped entirely and
  /// false is returned.
  bool step(ParamStore& store);

  uint64_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return cfg_; }

  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::map<std::string, Moments>& state() { return state_; }
  void set_step_count(uint64_t n) { step_count_ = n; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, Moments> state_;
  uint64_t step_count_ = 0;
};

}  // namespace trajview::engine
