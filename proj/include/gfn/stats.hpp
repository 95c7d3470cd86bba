#pragma once
#include <vector>

namespace gfn {

struct TestResult {
    double statistic;
    double p_value;
};

// Pearson chi-square goodness of fit against expected probabilities (summing to 1).
TestResult chi_square_test(const std::vector<double>& counts, const std::vector<double>& expected);

// Two-sided paired t-test on a - b. Identical samples give p = 1.
TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gfn
