#pragma once

#include "pclnet/common.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace pclnet {

// Evaluation grid plus values. For CATE the grid points are (a, v) pairs; for
// ATT they are intervention levels at a fixed anchor stored alongside.
struct DoseResponseCurve {
    std::vector<double> grid_a;
    std::vector<double> grid_v;  // empty unless CATE
    double anchor = 0.0;         // ATT only
    bool has_anchor = false;
    std::vector<double> values;
    std::string tag;
    bool anchor_outside_support = false;

    std::size_t size() const { return values.size(); }
};

inline double causal_mse(const DoseResponseCurve& estimate, const DoseResponseCurve& oracle) {
    require(estimate.values.size() == oracle.values.size(), "causal_mse: grid size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < estimate.values.size(); ++i) {
        double d = estimate.values[i] - oracle.values[i];
        s += d * d;
    }
    return s / static_cast<double>(estimate.values.size());
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> g(n);
    if (n == 1) {
        g[0] = 0.5 * (lo + hi);
        return g;
    }
    for (int i = 0; i < n; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

inline double percentile(std::vector<double> v, double p) {
    require(!v.empty(), "percentile of empty vector");
    std::sort(v.begin(), v.end());
    double idx = p * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(idx);
    auto hi = std::min(lo + 1, v.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

// default evaluation grid: uniform between the empirical 2.5th and 97.5th
// percentiles of the treatment sample
inline std::vector<double> default_grid(const Vec& a, int n = 100) {
    std::vector<double> va(a.data(), a.data() + a.size());
    return linspace(percentile(va, 0.025), percentile(va, 0.975), n);
}

} // namespace pclnet
