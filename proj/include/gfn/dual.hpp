#pragma once
#include <cmath>
#include <utility>
#include <vector>

#include "gfn/logmath.hpp"

namespace gfn {

// Value with a sparse gradient over parameter indices. Duplicate indices are summed on read.
struct Dual {
    double v = 0.0;
    std::vector<std::pair<int, double>> g;

    Dual() = default;
    Dual(double x) : v(x) {}  // NOLINT: constants promote implicitly
    static Dual var(double x, int index) {
        Dual d(x);
        d.g.push_back({index, 1.0});
        return d;
    }
    std::vector<double> dense(int n) const {
        std::vector<double> out(n, 0.0);
        for (auto [i, x] : g) out[i] += x;
        return out;
    }
};

inline Dual operator+(Dual a, const Dual& b) {
    a.v += b.v;
    a.g.insert(a.g.end(), b.g.begin(), b.g.end());
    return a;
}
inline Dual operator*(double c, Dual a) {
    a.v *= c;
    for (auto& e : a.g) e.second *= c;
    return a;
}
inline Dual operator-(const Dual& a) { return -1.0 * a; }
inline Dual operator-(const Dual& a, const Dual& b) { return a + (-b); }
inline Dual operator/(const Dual& a, double c) { return (1.0 / c) * a; }
inline Dual& operator+=(Dual& a, const Dual& b) { return a = a + b; }

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

inline double lse(const std::vector<double>& xs) { return logsumexp(xs); }
inline Dual lse(const std::vector<Dual>& xs) {
    std::vector<double> v;
    for (auto& x : xs) v.push_back(x.v);
    Dual out(logsumexp(v));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double w = std::exp(xs[i].v - out.v);
        for (auto [k, d] : xs[i].g) out.g.push_back({k, w * d});
    }
    return out;
}

}  // namespace gfn
