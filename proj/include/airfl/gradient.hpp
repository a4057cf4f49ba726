#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace airfl {

// Flat real-valued vector used for model parameters, gradients, residuals
// and aggregates alike.
using Vec = std::vector<double>;

inline double squared_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void check_same_size(const Vec& a, const Vec& b, const char* what) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
}

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
    check_same_size(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Vec& v, double a) {
    for (double& x : v) x *= a;
}

inline Vec mean_of(const std::vector<const Vec*>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean_of: empty input");
    Vec out(xs[0]->size(), 0.0);
    for (const Vec* x : xs) axpy(1.0, *x, out);
    scale(out, 1.0 / static_cast<double>(xs.size()));
    return out;
}

}  // namespace airfl
