#include "gfn/stats.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace gfn {

TestResult chi_square_test(const std::vector<double>& counts, const std::vector<double>& expected) {
    if (counts.size() != expected.size() || counts.size() < 2) throw std::invalid_argument("chi-square needs matching bins");
    double n = 0;
    for (double c : counts) n += c;
    if (n <= 0) throw std::invalid_argument("chi-square needs observations");
    double stat = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        double e = n * expected[i];
        if (e <= 0) throw std::invalid_argument("chi-square needs positive expected counts");
        stat += (counts[i] - e) * (counts[i] - e) / e;
    }
    boost::math::chi_squared dist(double(counts.size() - 1));
    return {stat, boost::math::cdf(boost::math::complement(dist, stat))};
}

TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired test needs two matched samples");
    double n = double(a.size()), m = 0, s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m += (a[i] - b[i]) / n;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i] - m) * (a[i] - b[i] - m);
    s = std::sqrt(s / (n - 1));
    if (s == 0) return {0.0, m == 0 ? 1.0 : 0.0};
    double t = m / (s / std::sqrt(n));
    boost::math::students_t dist(n - 1);
    return {t, 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)))};
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson_r needs matched samples");
    double n = double(x.size()), mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace gfn
