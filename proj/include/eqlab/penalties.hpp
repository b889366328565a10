#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "eqlab/expr.hpp"
#include "eqlab/matrix.hpp"

namespace eqlab {

enum class ConstraintKind { divergence, symmetry, sign, monotonic, asymptote };
enum class Direction { increasing, decreasing };
enum class SignRequirement { nonnegative, nonpositive };
/// must_diverge is the default: a bounded expression at the probe point is penalized.
enum class DivergencePolarity { must_diverge, must_stay_bounded };

std::string_view kind_name(ConstraintKind k);
std::optional<ConstraintKind> kind_from_name(std::string_view s);

/// Rows outside [low, high] on `axis` are dropped from the sample set.
struct RegionBound {
    std::size_t axis = 0;
    double low = -std::numeric_limits<double>::infinity();
    double high = std::numeric_limits<double>::infinity();
};

struct ConstraintParams {
    double c = 0.5;              ///< asymptote: derivative-magnitude bound
    double n = 500.0;            ///< asymptote: penalty scale
    double tol = 1e-8;           ///< sign / monotonic slack
    double step = 1e-4;          ///< relative finite-difference step
    double threshold = 1e8;      ///< divergence magnitude threshold
    double at = 0.0;             ///< divergence: singular coordinate
    double approach = 1.0;       ///< divergence: +1 approaches from above, -1 from below
    double rel_tol = 1e-9;       ///< symmetry tolerance
    Direction direction = Direction::increasing;
    SignRequirement sign = SignRequirement::nonnegative;
    DivergencePolarity polarity = DivergencePolarity::must_diverge;
    std::size_t max_samples = 256;
    std::size_t max_base_points = 8;  ///< divergence: base rows probed
};

struct ConstraintSpec {
    ConstraintKind kind = ConstraintKind::sign;
    /// Axis for divergence / monotonic / asymptote (first entry is used).
    std::vector<std::size_t> axes;
    /// Symmetry: variable pairs swapped simultaneously.
    /// Divergence: when set, probes move x_j to x_i + approach * 10^-k for every
    /// pair (i, j) instead of moving the single axis towards `at`.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<RegionBound> region;
    std::vector<std::vector<double>> probes;
    bool use_dataset_rows = true;
    ConstraintParams params;

    /// Throws std::invalid_argument on inconsistent specs.
    void validate() const;
    std::size_t axis() const { return axes.empty() ? 0 : axes.front(); }
};

struct FitnessConfig {
    double lambda = 100.0;
    double parsimony = 1e-3;
    std::vector<ConstraintSpec> constraints;
    /// Iterations (from the start) during which penalties apply; empty = all.
    std::optional<std::size_t> constraint_schedule;

    void validate() const;
    bool constraints_active_at(std::size_t iteration) const {
        return !constraints.empty() && (!constraint_schedule || iteration < *constraint_schedule);
    }
};

/// Fitness assigned to any individual that fails to evaluate on a dataset row.
inline constexpr double kFailureFitness = 1e12;
/// Asymptote penalty at a point where the expression fails, in units of n.
inline constexpr double kAsymptoteFailureScale = 1e6;

// ---------------------------------------------------------------------------
// Penalty functionals over explicit point sets.

int phi_divergence(const Expression& expr, const Matrix& base_points, std::size_t axis, double at, double approach,
                   double magnitude_threshold, DivergencePolarity polarity = DivergencePolarity::must_diverge);

int phi_symmetry(const Expression& expr, const Matrix& sample_points,
                 std::span<const std::pair<std::size_t, std::size_t>> pairs, double rel_tol = 1e-9);

int phi_sign(const Expression& expr, const Matrix& sample_points, SignRequirement sign, double tol = 0.0);

int phi_monotonic(const Expression& expr, const Matrix& sample_points, std::size_t axis, Direction direction,
                  double step = 1e-4, double tol = 1e-8);

double phi_asymptote(const Expression& expr, const Matrix& sample_points, std::size_t axis, double c, double n,
                     double step = 1e-4);

/// Divergence with coincidence probes: x_j -> x_i for every pair (i, j).
int phi_divergence_pairs(const Expression& expr, const Matrix& base_points,
                         std::span<const std::pair<std::size_t, std::size_t>> pairs, double approach,
                         double magnitude_threshold, DivergencePolarity polarity = DivergencePolarity::must_diverge);

/// Central-difference partial derivative per row with step max(step*|x|, 1e-6).
/// Rows whose stencil fails hold NaN.
std::vector<double> partial_derivative(const Expression& expr, const Matrix& points, std::size_t axis,
                                       double step = 1e-4);

// ---------------------------------------------------------------------------
// Constraints bound to a dataset: sample sets and stencils are built once.

class CompiledConstraint {
public:
    CompiledConstraint(const ConstraintSpec& spec, const Matrix& dataset_x);

    double penalty(const Expression& expr) const;
    const ConstraintSpec& spec() const { return spec_; }
    const Matrix& samples() const { return samples_; }

private:
    ConstraintSpec spec_;
    Matrix samples_;
    Matrix shifted_;   // symmetry: swapped samples; divergence: probe sequence
    Matrix plus_;      // finite-difference stencils
    Matrix minus_;
    std::vector<double> h_;
};

struct FitnessResult {
    double fitness = kFailureFitness;
    double loss = kFailureFitness;
    double penalty = 0.0;
    bool failed = true;
};

double rmse(std::span<const double> predicted, std::span<const double> observed);

/// Fitness evaluation against one dataset, with constraint stencils prepared up front.
class FitnessEvaluator {
public:
    FitnessEvaluator(const Dataset& data, FitnessConfig config);

    FitnessResult evaluate(const Expression& expr, bool constraints_active) const;
    /// Loss alone (RMSE, or kFailureFitness on failure).
    double loss(const Expression& expr) const;
    /// Sum of penalty values over all constraints (without lambda).
    double total_penalty(const Expression& expr) const;

    const Dataset& data() const { return *data_; }
    const FitnessConfig& config() const { return config_; }

private:
    const Dataset* data_;
    FitnessConfig config_;
    std::vector<CompiledConstraint> compiled_;
};

/// RMSE + (active ? lambda * sum(phi) : 0) + parsimony * complexity; kFailureFitness on any failure.
double fitness(const Expression& expr, const Dataset& data, const FitnessConfig& config, bool constraints_active);

}  // namespace eqlab
