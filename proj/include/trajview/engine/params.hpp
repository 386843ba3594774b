#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "trajview/engine/rng.hpp"
#include "trajview/engine/tape.hpp"
#include "trajview/engine/tensor.hpp"

namespace trajview::engine {

/// Named model parameter. Values are kept at float32 resolution (stored in
/// doubles) so that checkpoints, which serialize float32, round-trip without
/// loss; see snap_f32().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Rounds every entry to the nearest float32.
void snap_f32(Tensor& t);

enum class Init { Zeros, Ones, GlorotUniform, Normal02 };

/// Registry of named parameters with deterministic seeded initialization.
/// Creation order is part of the model definition: the same (seed, creation
/// sequence) always produces identical values.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : rng_(make_rng(mix_seed({seed, 0x7061726d73ull}))) {}

  Parameter& create(const std::string& name, int rows, int cols, Init init, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  /// Parameters in creation order.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grads();

  /// Binds a parameter as a tape leaf. After Tape::backward, call
  /// collect_grads to pull leaf gradients back into Parameter::grad.
  Var bind(Tape& tape, const std::string& name);
  void collect_grads(Tape& tape);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, size_t> index_;
  std::mt19937_64 rng_;
  // (param index, tape var) bindings for the current tape
  std::vector<std::pair<size_t, Var>> bound_;
};

}  // namespace trajview::engine
