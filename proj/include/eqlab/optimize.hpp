#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

namespace eqlab {

/// Minimizes f from x0 (with known value f0) using at most `budget` evaluations.
/// Returns the best point and its value.
template <typename F>
std::pair<std::vector<double>, double> nelder_mead(F&& f, std::vector<double> x0, double f0, std::size_t budget) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    std::vector<double> vals(n + 1, f0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double step = std::fabs(x0[i]) > 1e-8 ? 0.1 * std::fabs(x0[i]) : 0.1;
        pts[i + 1][i] += step;
        vals[i + 1] = f(pts[i + 1]);
        ++used;
    }
    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n);
    std::vector<double> xr(n);
    std::vector<double> xe(n);
    std::vector<double> xc(n);
    while (used < budget) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t lo = order.front();
        const std::size_t hi = order.back();
        const std::size_t second = order[n - 1 + (n == 0 ? 1 : 0)];
        double diameter = 0.0;
        double scale = 1.0;
        for (std::size_t k = 0; k <= n; ++k) {
            for (std::size_t d = 0; d < n; ++d) {
                diameter = std::max(diameter, std::fabs(pts[k][d] - pts[lo][d]));
                scale = std::max(scale, std::fabs(pts[lo][d]));
            }
        }
        if (diameter <= 1e-13 * scale) {
            break;
        }
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t k = 0; k <= n; ++k) {
            if (k == hi) continue;
            for (std::size_t d = 0; d < n; ++d) centroid[d] += pts[k][d] / static_cast<double>(n);
        }
        for (std::size_t d = 0; d < n; ++d) xr[d] = centroid[d] + (centroid[d] - pts[hi][d]);
        const double fr = f(xr);
        ++used;
        if (fr < vals[lo]) {
            for (std::size_t d = 0; d < n; ++d) xe[d] = centroid[d] + 2.0 * (centroid[d] - pts[hi][d]);
            const double fe = f(xe);
            ++used;
            if (fe < fr) {
                pts[hi] = xe;
                vals[hi] = fe;
            } else {
                pts[hi] = xr;
                vals[hi] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[hi] = xr;
            vals[hi] = fr;
            continue;
        }
        const bool outside = fr < vals[hi];
        for (std::size_t d = 0; d < n; ++d) {
            xc[d] = outside ? centroid[d] + 0.5 * (xr[d] - centroid[d])
                            : centroid[d] + 0.5 * (pts[hi][d] - centroid[d]);
        }
        const double fc = f(xc);
        ++used;
        if (fc < std::min(fr, vals[hi])) {
            pts[hi] = xc;
            vals[hi] = fc;
            continue;
        }
        for (std::size_t k = 0; k <= n; ++k) {
            if (k == lo) continue;
            for (std::size_t d = 0; d < n; ++d) pts[k][d] = pts[lo][d] + 0.5 * (pts[k][d] - pts[lo][d]);
            vals[k] = f(pts[k]);
            ++used;
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    return {pts[best], vals[best]};
}

}  // namespace eqlab
