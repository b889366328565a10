#include "eqlab/gompertz.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>

#include "eqlab/optimize.hpp"

namespace eqlab {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// a * exp(-exp(-rate * (c - center)))
double gompertz_step(double a, double rate, double center, double c) {
    return a * std::exp(-std::exp(-rate * (c - center)));
}

// Negative literals are parenthesised so they can follow any operator.
std::string lit(double v) {
    const std::string s = format_number(v);
    return v < 0.0 ? "(" + s + ")" : s;
}

using Model = std::function<double(const std::vector<double>&, double)>;

struct CurveFit {
    std::vector<double> params;
    double rmse = 0.0;
};

CurveFit fit_curve(const Model& model, std::vector<double> init, const std::vector<double>& xs,
                   const std::vector<double>& ys, const GrowthFitOptions& options) {
    const auto sse = [&](const std::vector<double>& p) {
        double total = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r = model(p, xs[i]) - ys[i];
            total += r * r;
        }
        return std::isfinite(total) ? total : std::numeric_limits<double>::max();
    };
    double best = sse(init);
    for (std::size_t r = 0; r < std::max<std::size_t>(options.restarts, 1); ++r) {
        auto [x, f] = nelder_mead(sse, init, best, options.evaluations);
        const bool improved = f < best;
        if (f <= best) {
            init = std::move(x);
            best = f;
        }
        if (!improved && r > 0) {
            break;
        }
    }
    return {init, std::sqrt(best / static_cast<double>(xs.size()))};
}

// First x at which ys / scale crosses `level` (linear interpolation), or xs.front().
double crossing(const std::vector<double>& xs, const std::vector<double>& ys, double scale, double level) {
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double a = ys[i - 1] / scale - level;
        const double b = ys[i] / scale - level;
        if (a <= 0.0 && b >= 0.0 && b > a) {
            return xs[i - 1] + (xs[i] - xs[i - 1]) * (-a / (b - a));
        }
    }
    return xs.empty() ? 0.0 : xs.front();
}

}  // namespace

double GompertzParams::capacity(double c) const { return gompertz_step(a_scale, a_rate, a_center, c); }

double GompertzParams::lag(double c) const {
    return lag_low + (lag_high - lag_low) * std::exp(-std::exp(-lag_rate * (c - lag_center)));
}

double GompertzParams::k1(double c) const { return k1_scale * std::exp(-std::exp(k1_rate * (k1_center - c))); }

double GompertzParams::k2(double c) const {
    return k2_scale * std::exp(-std::exp(k2_rate * (k2_center - c))) + k2_offset;
}

double GompertzParams::rate(double c) const {
    const double s = sigmoid(c - blend_center);
    return (1.0 - s) * k1(c) + s * k2(c);
}

double GompertzParams::value(double t, double c) const {
    return capacity(c) * std::exp(-std::exp(-rate(c) * (t - lag(c))));
}

Expression gompertz_expression(const GompertzParams& p) {
    const std::string cap =
        lit(p.a_scale) + " * exp(-exp(" + lit(-p.a_rate) + " * (c - " + lit(p.a_center) + ")))";
    const std::string lag = lit(p.lag_low) + " + " + lit(p.lag_high - p.lag_low) + " * exp(-exp(" +
                            lit(-p.lag_rate) + " * (c - " + lit(p.lag_center) + ")))";
    const std::string k1 = lit(p.k1_scale) + " * exp(-exp(" + lit(p.k1_rate) + " * (" + lit(p.k1_center) + " - c)))";
    const std::string k2 = lit(p.k2_scale) + " * exp(-exp(" + lit(p.k2_rate) + " * (" + lit(p.k2_center) +
                           " - c))) + " + lit(p.k2_offset);
    const std::string s = "sigmoid(c - " + lit(p.blend_center) + ")";
    const std::string rate = "(1 - " + s + ") * (" + k1 + ") + " + s + " * (" + k2 + ")";
    const std::string text = "(" + cap + ") * exp(-exp(-(" + rate + ") * (t - (" + lag + "))))";
    const std::vector<std::string> names = {"t", "c"};
    return parse(text, OperatorSet::all(), names);
}

SynthOptions default_synth_options() {
    SynthOptions o;
    for (int t = 0; t <= 5000; t += 200) {
        o.times.push_back(t);
    }
    for (int c = 0; c <= 100; c += 10) {
        o.concentrations.push_back(c);
    }
    return o;
}

ObservationBatch synth_gompertz(const GompertzParams& params, const SynthOptions& options, Rng& rng) {
    if (options.times.empty() || options.concentrations.empty()) {
        throw std::invalid_argument("synth_gompertz: times and concentrations must be nonempty");
    }
    if (options.replicates < 1) {
        throw std::invalid_argument("synth_gompertz: replicates must be >= 1");
    }
    if (!(options.noise >= 0.0)) {
        throw std::invalid_argument("synth_gompertz: noise must be >= 0");
    }
    ObservationBatch batch;
    batch.feature_names = {"t", "c"};
    batch.target_name = "od";
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double c : options.concentrations) {
        for (double t : options.times) {
            Observation obs;
            obs.features = {t, c};
            const double y = params.value(t, c);
            for (std::size_t r = 0; r < options.replicates; ++r) {
                obs.replicates.push_back(options.noise > 0.0 ? y + options.noise * normal(rng) : y);
            }
            batch.rows.push_back(std::move(obs));
        }
    }
    return batch;
}

std::string growth_flag_names(std::uint32_t flags) {
    if (flags == growth_ok) {
        return "ok";
    }
    std::string out;
    const auto add = [&](std::uint32_t bit, const char* name) {
        if (flags & bit) {
            out += out.empty() ? "" : "|";
            out += name;
        }
    };
    add(growth_eval_failed, "eval_failed");
    add(growth_flat, "flat");
    add(growth_non_monotone, "non_monotone");
    add(growth_boundary_inflection, "boundary_inflection");
    return out;
}

GrowthExtraction extract_growth(const Expression& expr, double concentration, const GrowthFitOptions& options) {
    if (!(options.t_step > 0.0) || !(options.t_max > options.t_min)) {
        throw std::invalid_argument("extract_growth: need t_step > 0 and t_max > t_min");
    }
    GrowthExtraction out;
    out.concentration = concentration;

    const auto n = static_cast<std::size_t>(std::floor((options.t_max - options.t_min) / options.t_step)) + 1;
    const double h = options.t_step / 10.0;
    // Difference stencils are clamped to the window so the surface is never
    // evaluated outside the time range it was fitted on.
    const auto lower = [&](double t) { return std::max(t - h, options.t_min); };
    const auto upper = [&](double t) { return std::min(t + h, options.t_max); };
    // Rows: grid values, then lower stencil points, then upper stencil points.
    Matrix pts(3 * n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = options.t_min + static_cast<double>(i) * options.t_step;
        pts(i, 0) = t;
        pts(n + i, 0) = lower(t);
        pts(2 * n + i, 0) = upper(t);
    }
    for (std::size_t i = 0; i < 3 * n; ++i) {
        pts(i, 1) = concentration;
    }
    std::vector<double> v(3 * n);
    if (!eval_into(expr, pts, v)) {
        out.flags |= growth_eval_failed;
        return out;
    }
    std::vector<double> y(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<double> slope(n);
    for (std::size_t i = 0; i < n; ++i) {
        slope[i] = (v[2 * n + i] - v[n + i]) / (pts(2 * n + i, 0) - pts(n + i, 0));
    }

    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    out.capacity = *hi;
    const double range = *hi - *lo;
    const auto peak = static_cast<std::size_t>(std::max_element(slope.begin(), slope.end()) - slope.begin());
    out.max_slope = slope[peak];

    double running = y.front();
    for (double value : y) {
        running = std::max(running, value);
        if (running - value > 0.1 * range) {
            out.flags |= growth_non_monotone;
            break;
        }
    }
    const double rise = y.back() - y.front();
    if (!(out.max_slope > 0.0) || !(out.capacity > 0.0) || !(rise > 0.01 * out.capacity)) {
        out.flags |= growth_flat;
    }
    if (peak == 0 || peak + 1 == n) {
        out.flags |= growth_boundary_inflection;
    }
    if (out.flags != growth_ok) {
        return out;
    }
    out.plateaued = slope.back() < 0.01 * out.max_slope;

    // Golden-section refinement of the slope maximum between the neighbouring grid points.
    const auto at = [&](double t) {
        const std::array<double, 2> a{lower(t), concentration};
        const std::array<double, 2> b{upper(t), concentration};
        const EvalOutcome fa = eval(expr, a);
        const EvalOutcome fb = eval(expr, b);
        return fa.ok() && fb.ok() ? (fb.value - fa.value) / (b[0] - a[0]) : -std::numeric_limits<double>::infinity();
    };
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = pts(peak - 1, 0);
    double b = pts(peak + 1, 0);
    double x1 = b - g * (b - a);
    double x2 = a + g * (b - a);
    double f1 = at(x1);
    double f2 = at(x2);
    for (int it = 0; it < 60 && b - a > 1e-9 * std::max(1.0, std::fabs(a)); ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = at(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = at(x1);
        }
    }
    const double t_star = f1 >= f2 ? x1 : x2;
    const double s_star = std::max(f1, f2);
    if (s_star > out.max_slope) {
        out.max_slope = s_star;
        out.inflection = t_star;
    } else {
        out.inflection = pts(peak, 0);
    }
    const std::array<double, 2> mid{out.inflection, concentration};
    const EvalOutcome y_star = eval(expr, mid);
    if (!y_star.ok() || !(y_star.value > 0.0)) {
        out.flags |= growth_flat;
        return out;
    }
    out.rate = out.max_slope / y_star.value;
    out.tangent_lag = out.inflection - y_star.value / out.max_slope;
    return out;
}

GrowthFit fit_growth_params(const Expression& expr, const std::vector<double>& concentrations,
                            const GrowthFitOptions& options) {
    GrowthFit fit;
    std::vector<double> cap_c, cap_y, all_c, lag_y, rate_y;
    for (double c : concentrations) {
        const GrowthExtraction row = extract_growth(expr, c, options);
        if (row.ok()) {
            all_c.push_back(c);
            lag_y.push_back(row.inflection);
            rate_y.push_back(row.rate);
            if (row.plateaued) {
                cap_c.push_back(c);
                cap_y.push_back(row.capacity);
            }
        }
        fit.rows.push_back(row);
    }
    GompertzParams& p = fit.params;

    if (cap_c.size() >= 3) {
        const double a0 = *std::max_element(cap_y.begin(), cap_y.end());
        const Model model = [](const std::vector<double>& q, double c) { return gompertz_step(q[0], q[1], q[2], c); };
        const auto r = fit_curve(model, {a0, 0.05, crossing(cap_c, cap_y, a0, std::exp(-1.0))}, cap_c, cap_y, options);
        p.a_scale = r.params[0];
        p.a_rate = r.params[1];
        p.a_center = r.params[2];
        fit.capacity_rmse = r.rmse;
        fit.capacity_fitted = true;
    }

    if (all_c.size() >= 4) {
        const double low = *std::min_element(lag_y.begin(), lag_y.end());
        const double high = *std::max_element(lag_y.begin(), lag_y.end());
        std::vector<double> shifted;
        for (double v : lag_y) {
            shifted.push_back(v - low);
        }
        const double center = high > low ? crossing(all_c, shifted, high - low, std::exp(-1.0)) : all_c.front();
        const Model model = [](const std::vector<double>& q, double c) {
            return q[0] + q[1] * std::exp(-std::exp(-q[2] * (c - q[3])));
        };
        const auto r = fit_curve(model, {low, high - low, 0.05, center}, all_c, lag_y, options);
        p.lag_low = r.params[0];
        p.lag_high = r.params[0] + r.params[1];
        p.lag_rate = r.params[2];
        p.lag_center = r.params[3];
        fit.lag_rmse = r.rmse;
        fit.lag_fitted = true;
    }

    if (all_c.size() >= 8) {
        const double blend = p.blend_center;
        std::vector<double> low_c, low_k;
        for (std::size_t i = 0; i < all_c.size(); ++i) {
            if (all_c[i] < blend) {
                low_c.push_back(all_c[i]);
                low_k.push_back(rate_y[i]);
            }
        }
        const double a1 = low_k.empty() ? rate_y.front() : *std::max_element(low_k.begin(), low_k.end());
        const double c1 = low_c.empty() ? blend / 2.0 : crossing(low_c, low_k, a1, std::exp(-1.0));
        const double k_end = rate_y.back();
        const Model model = [blend](const std::vector<double>& q, double c) {
            const double s = sigmoid(c - blend);
            const double k1 = q[0] * std::exp(-std::exp(q[1] * (q[2] - c)));
            const double k2 = q[3] * std::exp(-std::exp(q[4] * (q[5] - c))) + q[6];
            return (1.0 - s) * k1 + s * k2;
        };
        const auto r = fit_curve(model, {a1, 0.1, c1, -a1, 0.3, c1, k_end + a1}, all_c, rate_y, options);
        p.k1_scale = r.params[0];
        p.k1_rate = r.params[1];
        p.k1_center = r.params[2];
        p.k2_scale = r.params[3];
        p.k2_rate = r.params[4];
        p.k2_center = r.params[5];
        p.k2_offset = r.params[6];
        fit.rate_rmse = r.rmse;
        fit.rate_fitted = true;
    }
    return fit;
}

}  // namespace eqlab
