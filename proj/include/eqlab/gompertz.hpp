#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eqlab/expr.hpp"
#include "eqlab/observations.hpp"

namespace eqlab {

/// Growth surface y(t, c) = A(c) * exp(-exp(-k_g(c) * (t - T_l(c)))) with
///   A(c)   = a_scale * exp(-exp(-a_rate * (c - a_center)))
///   T_l(c) = lag_low + (lag_high - lag_low) * exp(-exp(-lag_rate * (c - lag_center)))
///   k1(c)  = k1_scale * exp(-exp(k1_rate * (k1_center - c)))
///   k2(c)  = k2_scale * exp(-exp(k2_rate * (k2_center - c))) + k2_offset
///   k_g(c) = (1 - s(c - blend_center)) * k1(c) + s(c - blend_center) * k2(c),  s = logistic sigmoid
/// Defaults are the reference lactate growth surface (t in minutes, c in mM).
/// k1_scale is positive: with a negative k1 the low-concentration curves decay.
struct GompertzParams {
    double a_scale = 0.78937;
    double a_rate = 0.065;
    double a_center = 16.807;

    double lag_low = 420.0;
    double lag_high = 1065.0;
    double lag_rate = 0.05806;
    double lag_center = 18.97684;

    // 0.35 * (-0.4 c + 6.75) = 0.14 * (16.875 - c)
    double k1_scale = 0.00601;
    double k1_rate = 0.14;
    double k1_center = 16.875;

    // 0.3 * (-1.18 c + 15.75) = 0.354 * (15.75 / 1.18 - c)
    double k2_scale = -0.00601;
    double k2_rate = 0.354;
    double k2_center = 15.75 / 1.18;
    double k2_offset = 0.00831;

    double blend_center = 35.0;

    double capacity(double c) const;
    double lag(double c) const;
    double k1(double c) const;
    double k2(double c) const;
    double rate(double c) const;
    double value(double t, double c) const;
};

/// The surface as an expression over (t, c) = (x0, x1).
Expression gompertz_expression(const GompertzParams& params);

struct SynthOptions {
    std::vector<double> times;
    std::vector<double> concentrations;
    std::size_t replicates = 3;
    /// Standard deviation of additive Gaussian noise, in units of y.
    double noise = 0.0;
};

/// Default sampling plan: t = 0..5000 min every 200 min, c = 0..100 mM every 10 mM.
SynthOptions default_synth_options();

/// One observation per (c, t) pair, concentration-major, features (t, c).
ObservationBatch synth_gompertz(const GompertzParams& params, const SynthOptions& options, Rng& rng);

// ---------------------------------------------------------------------------
// Growth-parameter extraction from a fitted surface.

enum GrowthFlag : std::uint32_t {
    growth_ok = 0,
    growth_eval_failed = 1u << 0,     ///< the surface failed to evaluate on the time grid
    growth_flat = 1u << 1,            ///< no rise over the window
    growth_non_monotone = 1u << 2,    ///< drops by more than 10% of its range
    growth_boundary_inflection = 1u << 3,  ///< steepest point at the window edge
};

std::string growth_flag_names(std::uint32_t flags);

struct GrowthExtraction {
    double concentration = 0.0;
    std::uint32_t flags = growth_ok;
    bool plateaued = false;    ///< slope at the window end below 1% of the maximum slope
    double capacity = 0.0;     ///< sup of y over the window
    double max_slope = 0.0;
    /// Time of maximum slope. For an exact Gompertz curve this is T_l, and it
    /// equals tangent_lag + 1 / rate.
    double inflection = 0.0;
    double tangent_lag = 0.0;  ///< intercept of the max-slope tangent with y = 0
    double rate = 0.0;         ///< max_slope / y(inflection)

    bool ok() const { return flags == growth_ok; }
};

struct GrowthFitOptions {
    double t_min = 0.0;
    double t_max = 5000.0;
    double t_step = 5.0;
    std::size_t evaluations = 4000;  ///< Nelder-Mead budget per restart
    std::size_t restarts = 4;
};

struct GrowthFit {
    GompertzParams params;
    std::vector<GrowthExtraction> rows;
    bool capacity_fitted = false;
    bool lag_fitted = false;
    bool rate_fitted = false;
    double capacity_rmse = 0.0;
    double lag_rmse = 0.0;
    double rate_rmse = 0.0;
};

/// Extraction at one concentration. `expr` takes (t, c) as (x0, x1).
GrowthExtraction extract_growth(const Expression& expr, double concentration, const GrowthFitOptions& options = {});

/// Extracts each concentration, then least-squares fits the A, T_l and k_g forms:
/// A on plateaued rows, T_l (from the inflection times) and k_g on every cleanly extracted row.
GrowthFit fit_growth_params(const Expression& expr, const std::vector<double>& concentrations,
                            const GrowthFitOptions& options = {});

}  // namespace eqlab
