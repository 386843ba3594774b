#pragma once

#include <vector>

namespace trajview::eval {

double mae(const std::vector<double>& truth, const std::vector<double>& pred);
double rmse(const std::vector<double>& truth, const std::vector<double>& pred);

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;  // mean per-class F1 over classes present in the truth
};

/// Single-label multiclass F1. Micro aggregates TP/FP/FN over all classes
/// (equal to plain accuracy in this setting); macro averages per-class F1,
/// counting absent-denominator classes as 0.
F1Scores f1_scores(const std::vector<int>& truth, const std::vector<int>& pred, int n_classes);

/// Fraction of rows whose truth appears among the first k entries of its
/// ranked prediction list.
double acc_at_k(const std::vector<int>& truth, const std::vector<std::vector<int>>& ranked, int k);

}  // namespace trajview::eval
