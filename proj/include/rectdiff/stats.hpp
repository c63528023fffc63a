#pragma once

#include <vector>

namespace rectdiff {

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v);  // sample standard deviation

// One-sided exact binomial tail: P(X >= positives) with X ~ Bin(n, 1/2).
double sign_test_p_greater(int positives, int n);

// One-sided paired t test, H1: mean(diffs) > 0. Exact Student-t tail.
double paired_t_p_greater(const std::vector<double>& diffs);

}  // namespace rectdiff
