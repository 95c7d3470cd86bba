#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace gfn {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logaddexp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double logsumexp(std::span<const double> xs) {
    double m = kNegInf;
    for (double x : xs) m = std::max(m, x);
    if (m == kNegInf || !std::isfinite(m)) return m;
    double s = 0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}
inline double logsumexp(const std::vector<double>& xs) { return logsumexp(std::span<const double>(xs)); }

// log(k!) via lgamma
inline double log_factorial(int k) { return std::lgamma(double(k) + 1.0); }

// in-place log-softmax
inline void log_normalize(std::vector<double>& v) {
    double z = logsumexp(v);
    for (double& x : v) x -= z;
}

}  // namespace gfn
