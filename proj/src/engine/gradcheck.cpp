#include "trajview/engine/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace trajview::engine {

namespace {

double eval(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Var out = fn(tape, leaves);
  return tape.value(out)[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps) {
  // analytic pass
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Var out = fn(tape, leaves);
  if (!std::isfinite(tape.value(out)[0])) throw std::runtime_error("grad_check: non-finite function value");
  tape.backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (Var v : leaves) analytic.push_back(tape.grad(v));

  GradCheckResult res;
  std::vector<Tensor> work = inputs;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (size_t i = 0; i < inputs[k].numel(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + eps;
      const double fp = eval(fn, work);
      work[k][i] = orig - eps;
      const double fm = eval(fn, work);
      work[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k][i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw std::runtime_error("grad_check: non-finite gradient at input " + std::to_string(k) + " coord " +
                                 std::to_string(i));
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_input = static_cast<int>(k);
        res.worst_coord = i;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace trajview::engine
