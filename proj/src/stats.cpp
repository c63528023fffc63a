#include "rectdiff/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "rectdiff/error.hpp"

namespace rectdiff {

double mean_of(const std::vector<double>& v) {
    if (v.empty())
        throw Error(ErrorCategory::state, "stats: empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2)
        throw Error(ErrorCategory::state, "stats: need at least two samples");
    double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double sign_test_p_greater(int positives, int n) {
    if (n < 1 || positives < 0 || positives > n)
        throw Error(ErrorCategory::state, "sign test: bad counts");
    // sum C(n,k)/2^n for k = positives..n, in log space
    double p = 0.0;
    for (int k = positives; k <= n; ++k) {
        double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(lc - n * std::log(2.0));
    }
    return std::min(p, 1.0);
}

double paired_t_p_greater(const std::vector<double>& diffs) {
    size_t n = diffs.size();
    if (n < 2)
        throw Error(ErrorCategory::state, "paired t test: need at least two pairs");
    double m = mean_of(diffs);
    double sd = stddev_of(diffs);
    if (sd == 0.0) return m > 0.0 ? 0.0 : 1.0;
    double t = m / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(n - 1));
    return cdf(complement(dist, t));
}

}  // namespace rectdiff
