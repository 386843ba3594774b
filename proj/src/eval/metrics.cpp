#include "trajview/eval/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace trajview::eval {

namespace {

void check_lengths(size_t a, size_t b) {
  if (a != b || a == 0) throw std::invalid_argument("metrics: inputs must be non-empty and equal length");
}

}  // namespace

double mae(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_lengths(truth.size(), pred.size());
  double sum = 0;
  for (size_t i = 0; i < truth.size(); ++i) sum += std::fabs(truth[i] - pred[i]);
  return sum / truth.size();
}

double rmse(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_lengths(truth.size(), pred.size());
  double sum = 0;
  for (size_t i = 0; i < truth.size(); ++i) sum += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  return std::sqrt(sum / truth.size());
}

F1Scores f1_scores(const std::vector<int>& truth, const std::vector<int>& pred, int n_classes) {
  check_lengths(truth.size(), pred.size());
  std::vector<long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0), support(n_classes, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes)
      throw std::invalid_argument("f1_scores: label out of range");
    support[truth[i]]++;
    if (truth[i] == pred[i]) {
      tp[truth[i]]++;
    } else {
      fp[pred[i]]++;
      fn[truth[i]]++;
    }
  }
  long tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0;
  int macro_classes = 0;
  for (int c = 0; c < n_classes; ++c) {
    tp_all += tp[c];
    fp_all += fp[c];
    fn_all += fn[c];
    if (support[c] == 0) continue;  // absent classes are reported and skipped
    ++macro_classes;
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    macro_sum += denom > 0 ? 2.0 * tp[c] / denom : 0.0;
  }
  F1Scores out;
  const double micro_denom = 2.0 * tp_all + fp_all + fn_all;
  out.micro = micro_denom > 0 ? 2.0 * tp_all / micro_denom : 0.0;
  out.macro = macro_classes > 0 ? macro_sum / macro_classes : 0.0;
  return out;
}

double acc_at_k(const std::vector<int>& truth, const std::vector<std::vector<int>>& ranked, int k) {
  check_lengths(truth.size(), ranked.size());
  if (k < 1) throw std::invalid_argument("acc_at_k: k must be >= 1");
  long hits = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (k > static_cast<int>(ranked[i].size()))
      throw std::invalid_argument("acc_at_k: k exceeds the candidate count");
    for (int j = 0; j < k; ++j)
      if (ranked[i][j] == truth[i]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / truth.size();
}

}  // namespace trajview::eval
