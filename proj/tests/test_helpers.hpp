#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "uap/rng.hpp"
#include "uap/tensor.hpp"

namespace uap::testing {

inline Array3 random_array(Shape3 shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array3 a(shape);
    for (double& x : a.v) x = rng.uniform(lo, hi);
    return a;
}

inline std::vector<double> random_vector(size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Central finite difference of f along direction d at x.
inline double directional_fd(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x, const std::vector<double>& d,
                             double h = 1e-6) {
    std::vector<double> xp = x, xm = x;
    for (size_t i = 0; i < x.size(); ++i) {
        xp[i] += h * d[i];
        xm[i] -= h * d[i];
    }
    return (f(xp) - f(xm)) / (2.0 * h);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double rel_err(double got, double want) {
    double denom = std::max(std::abs(want), 1e-12);
    return std::abs(got - want) / denom;
}

}  // namespace uap::testing
