#pragma once

#include <functional>
#include <vector>

#include "trajview/engine/tape.hpp"
#include "trajview/engine/tensor.hpp"

namespace trajview::engine {

/// A differentiable scalar function: given a tape and leaves (one per input
/// tensor, in order), build and return a 1x1 output. Must be pure.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  // coordinate where the worst disagreement occurred
  int worst_input = -1;
  size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central finite differences against reverse-mode gradients.
/// rel error per coordinate = |a - n| / max(|a|, |n|, 1e-8).
/// Throws if the function or its gradient produce non-finite values,
/// naming the offending coordinate.
GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace trajview::engine
