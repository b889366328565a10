#include "eqlab/penalties.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace eqlab {

namespace {

constexpr std::array<std::string_view, 5> kKindNames = {"divergence", "symmetry", "sign", "monotonic", "asymptote"};

constexpr std::size_t kDivergenceDecades = 8;

double fd_step(double x, double rel) { return std::max(rel * std::fabs(x), 1e-6); }

bool diverges(const EvalOutcome& o, double threshold) {
    if (!o.ok()) {
        return o.failure == DomainFailure::division || o.failure == DomainFailure::overflow;
    }
    return std::fabs(o.value) > threshold;
}

Matrix divergence_probes(const Matrix& base, std::size_t axis, double at, double approach) {
    Matrix probes(base.rows() * kDivergenceDecades, base.cols());
    for (std::size_t b = 0; b < base.rows(); ++b) {
        for (std::size_t k = 0; k < kDivergenceDecades; ++k) {
            const std::size_t r = b * kDivergenceDecades + k;
            for (std::size_t c = 0; c < base.cols(); ++c) {
                probes(r, c) = base(b, c);
            }
            probes(r, axis) = at + approach * std::pow(10.0, -static_cast<double>(k + 1));
        }
    }
    return probes;
}

Matrix coincidence_probes(const Matrix& base, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                          double approach) {
    Matrix probes(base.rows() * kDivergenceDecades, base.cols());
    for (std::size_t b = 0; b < base.rows(); ++b) {
        for (std::size_t k = 0; k < kDivergenceDecades; ++k) {
            const std::size_t r = b * kDivergenceDecades + k;
            for (std::size_t c = 0; c < base.cols(); ++c) {
                probes(r, c) = base(b, c);
            }
            for (const auto& [i, j] : pairs) {
                probes(r, j) = base(b, i) + approach * std::pow(10.0, -static_cast<double>(k + 1));
            }
        }
    }
    return probes;
}

int divergence_from_probes(const Expression& expr, const Matrix& probes, std::size_t base_rows, double threshold,
                           DivergencePolarity polarity) {
    const auto out = eval_batch(expr, probes);
    bool all_diverge = true;
    bool any_diverge = false;
    for (std::size_t b = 0; b < base_rows; ++b) {
        bool hit = false;
        for (std::size_t k = 0; k < kDivergenceDecades && !hit; ++k) {
            hit = diverges(out[b * kDivergenceDecades + k], threshold);
        }
        all_diverge = all_diverge && hit;
        any_diverge = any_diverge || hit;
    }
    if (polarity == DivergencePolarity::must_diverge) {
        return all_diverge ? 0 : 1;
    }
    return any_diverge ? 1 : 0;
}

Matrix swapped(const Matrix& points, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    Matrix out = points;
    for (const auto& [i, j] : pairs) {
        for (std::size_t r = 0; r < points.rows(); ++r) {
            std::swap(out(r, i), out(r, j));
        }
    }
    return out;
}

int symmetry_from(const Expression& expr, const Matrix& a, const Matrix& b, double rel_tol) {
    if (a.rows() == 0) {
        return 0;
    }
    std::vector<double> ya(a.rows());
    std::vector<double> yb(b.rows());
    if (!eval_into(expr, a, ya) || !eval_into(expr, b, yb)) {
        return 1;
    }
    for (std::size_t r = 0; r < ya.size(); ++r) {
        if (std::fabs(ya[r] - yb[r]) > rel_tol * std::max(1.0, std::fabs(ya[r]))) {
            return 1;
        }
    }
    return 0;
}

struct Stencil {
    Matrix plus;
    Matrix minus;
    std::vector<double> h;
};

Stencil make_stencil(const Matrix& points, std::size_t axis, double step) {
    Stencil s{points, points, std::vector<double>(points.rows())};
    for (std::size_t r = 0; r < points.rows(); ++r) {
        const double x = points(r, axis);
        const double h = fd_step(x, step);
        s.plus(r, axis) = x + h;
        s.minus(r, axis) = x - h;
        // Use the representable step so the quotient matches the stencil exactly.
        s.h[r] = 0.5 * (s.plus(r, axis) - s.minus(r, axis));
    }
    return s;
}

std::vector<double> derivative_from(const Expression& expr, const Matrix& plus, const Matrix& minus,
                                    std::span<const double> h) {
    std::vector<double> yp(plus.rows());
    std::vector<double> ym(minus.rows());
    eval_into(expr, plus, yp);
    eval_into(expr, minus, ym);
    std::vector<double> d(plus.rows());
    for (std::size_t r = 0; r < d.size(); ++r) {
        d[r] = (yp[r] - ym[r]) / (2.0 * h[r]);
    }
    return d;
}

int monotonic_from(std::span<const double> d, Direction dir, double tol) {
    for (double v : d) {
        if (std::isnan(v)) {
            return 1;
        }
        if (dir == Direction::increasing ? v < -tol : v > tol) {
            return 1;
        }
    }
    return 0;
}

double asymptote_from(std::span<const double> d, double c, double n) {
    if (d.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (double v : d) {
        if (!std::isfinite(v)) {
            total += n * kAsymptoteFailureScale;
            continue;
        }
        const double mag = std::fabs(v);
        if (mag > c) {
            total += n * std::fabs(mag - c);
        }
    }
    return total / static_cast<double>(d.size());
}

int sign_from(const Expression& expr, const Matrix& points, SignRequirement sign, double tol) {
    std::vector<double> y(points.rows());
    if (!eval_into(expr, points, y)) {
        return 1;
    }
    for (double v : y) {
        if (sign == SignRequirement::nonnegative ? v < -tol : v > tol) {
            return 1;
        }
    }
    return 0;
}

void require_axis(const Matrix& points, std::size_t axis) {
    if (points.rows() > 0 && axis >= points.cols()) {
        throw std::invalid_argument("constraint axis " + std::to_string(axis) + " out of range");
    }
}

}  // namespace

std::string_view kind_name(ConstraintKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<ConstraintKind> kind_from_name(std::string_view s) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == s) {
            return static_cast<ConstraintKind>(i);
        }
    }
    return std::nullopt;
}

void ConstraintSpec::validate() const {
    switch (kind) {
        case ConstraintKind::symmetry:
            if (pairs.empty()) {
                throw std::invalid_argument("symmetry constraint needs at least one variable pair");
            }
            for (const auto& [i, j] : pairs) {
                if (i == j) {
                    throw std::invalid_argument("symmetry pair indices must be distinct");
                }
            }
            break;
        case ConstraintKind::divergence:
            for (const auto& [i, j] : pairs) {
                if (i == j) {
                    throw std::invalid_argument("divergence pair indices must be distinct");
                }
            }
            if (axes.empty() && pairs.empty()) {
                throw std::invalid_argument("divergence constraint needs an axis or a variable pair");
            }
            break;
        case ConstraintKind::asymptote:
            if (!(params.c > 0.0) || !(params.n > 0.0)) {
                throw std::invalid_argument("asymptote constraint requires c > 0 and n > 0");
            }
            [[fallthrough]];
        case ConstraintKind::monotonic:
            if (axes.empty()) {
                throw std::invalid_argument(std::string(kind_name(kind)) + " constraint needs an axis");
            }
            break;
        case ConstraintKind::sign:
            break;
    }
    if (!(params.step > 0.0)) {
        throw std::invalid_argument("constraint step must be > 0");
    }
    if (kind == ConstraintKind::divergence && params.approach == 0.0) {
        throw std::invalid_argument("divergence approach direction must be nonzero");
    }
}

void FitnessConfig::validate() const {
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("lambda must be >= 0");
    }
    if (!(parsimony >= 0.0)) {
        throw std::invalid_argument("parsimony must be >= 0");
    }
    for (const auto& c : constraints) {
        c.validate();
    }
}

// ---------------------------------------------------------------------------

int phi_divergence(const Expression& expr, const Matrix& base_points, std::size_t axis, double at, double approach,
                   double magnitude_threshold, DivergencePolarity polarity) {
    require_axis(base_points, axis);
    if (base_points.rows() == 0) {
        return 0;
    }
    const auto probes = divergence_probes(base_points, axis, at, approach);
    return divergence_from_probes(expr, probes, base_points.rows(), magnitude_threshold, polarity);
}

int phi_divergence_pairs(const Expression& expr, const Matrix& base_points,
                         std::span<const std::pair<std::size_t, std::size_t>> pairs, double approach,
                         double magnitude_threshold, DivergencePolarity polarity) {
    for (const auto& [i, j] : pairs) {
        require_axis(base_points, std::max(i, j));
    }
    if (base_points.rows() == 0) {
        return 0;
    }
    return divergence_from_probes(expr, coincidence_probes(base_points, pairs, approach), base_points.rows(),
                                  magnitude_threshold, polarity);
}

int phi_symmetry(const Expression& expr, const Matrix& sample_points,
                 std::span<const std::pair<std::size_t, std::size_t>> pairs, double rel_tol) {
    for (const auto& [i, j] : pairs) {
        require_axis(sample_points, std::max(i, j));
    }
    return symmetry_from(expr, sample_points, swapped(sample_points, pairs), rel_tol);
}

int phi_sign(const Expression& expr, const Matrix& sample_points, SignRequirement sign, double tol) {
    return sign_from(expr, sample_points, sign, tol);
}

std::vector<double> partial_derivative(const Expression& expr, const Matrix& points, std::size_t axis, double step) {
    require_axis(points, axis);
    const auto s = make_stencil(points, axis, step);
    return derivative_from(expr, s.plus, s.minus, s.h);
}

int phi_monotonic(const Expression& expr, const Matrix& sample_points, std::size_t axis, Direction direction,
                  double step, double tol) {
    if (!(step > 0.0)) {
        throw std::invalid_argument("phi_monotonic: step must be > 0");
    }
    return monotonic_from(partial_derivative(expr, sample_points, axis, step), direction, tol);
}

double phi_asymptote(const Expression& expr, const Matrix& sample_points, std::size_t axis, double c, double n,
                     double step) {
    if (!(c > 0.0) || !(n > 0.0)) {
        throw std::invalid_argument("phi_asymptote: c and n must be > 0");
    }
    return asymptote_from(partial_derivative(expr, sample_points, axis, step), c, n);
}

// ---------------------------------------------------------------------------

CompiledConstraint::CompiledConstraint(const ConstraintSpec& spec, const Matrix& dataset_x) : spec_(spec) {
    spec_.validate();
    const std::size_t width = dataset_x.cols() > 0 ? dataset_x.cols()
                              : spec_.probes.empty() ? 0
                                                     : spec_.probes.front().size();
    auto in_region = [&](std::span<const double> row) {
        for (const auto& b : spec_.region) {
            if (b.axis >= row.size() || row[b.axis] < b.low || row[b.axis] > b.high) {
                return false;
            }
        }
        return true;
    };
    // Unique rows in first-seen order; augmented datasets repeat feature rows.
    std::set<std::vector<double>> seen;
    std::vector<std::vector<double>> rows;
    auto take = [&](std::vector<double> row) {
        if (row.size() != width) {
            throw std::invalid_argument("constraint probe width does not match the dataset");
        }
        if (in_region(row) && seen.insert(row).second) {
            rows.push_back(std::move(row));
        }
    };
    if (spec_.use_dataset_rows) {
        for (std::size_t r = 0; r < dataset_x.rows(); ++r) {
            take(dataset_x.row(r));
        }
    }
    for (const auto& p : spec_.probes) {
        take(p);
    }
    std::size_t limit = spec_.params.max_samples;
    if (spec_.kind == ConstraintKind::divergence) {
        limit = std::min(limit, spec_.params.max_base_points);
    }
    if (limit > 0 && rows.size() > limit) {
        // Even stride keeps coverage of the whole sample set.
        std::vector<std::vector<double>> thinned;
        for (std::size_t k = 0; k < limit; ++k) {
            thinned.push_back(rows[k * rows.size() / limit]);
        }
        rows = std::move(thinned);
    }
    samples_ = Matrix::from_rows(rows);

    switch (spec_.kind) {
        case ConstraintKind::divergence:
            if (samples_.rows() == 0) {
                break;
            }
            if (!spec_.pairs.empty()) {
                for (const auto& [i, j] : spec_.pairs) {
                    require_axis(samples_, std::max(i, j));
                }
                shifted_ = coincidence_probes(samples_, spec_.pairs, spec_.params.approach);
            } else {
                require_axis(samples_, spec_.axis());
                shifted_ = divergence_probes(samples_, spec_.axis(), spec_.params.at, spec_.params.approach);
            }
            break;
        case ConstraintKind::symmetry:
            for (const auto& [i, j] : spec_.pairs) {
                require_axis(samples_, std::max(i, j));
            }
            shifted_ = swapped(samples_, spec_.pairs);
            break;
        case ConstraintKind::monotonic:
        case ConstraintKind::asymptote: {
            require_axis(samples_, spec_.axis());
            auto s = make_stencil(samples_, spec_.axis(), spec_.params.step);
            plus_ = std::move(s.plus);
            minus_ = std::move(s.minus);
            h_ = std::move(s.h);
            break;
        }
        case ConstraintKind::sign:
            break;
    }
}

double CompiledConstraint::penalty(const Expression& expr) const {
    if (samples_.rows() == 0) {
        return 0.0;
    }
    const auto& p = spec_.params;
    switch (spec_.kind) {
        case ConstraintKind::divergence:
            return divergence_from_probes(expr, shifted_, samples_.rows(), p.threshold, p.polarity);
        case ConstraintKind::symmetry:
            return symmetry_from(expr, samples_, shifted_, p.rel_tol);
        case ConstraintKind::sign:
            return sign_from(expr, samples_, p.sign, p.tol);
        case ConstraintKind::monotonic:
            return monotonic_from(derivative_from(expr, plus_, minus_, h_), p.direction, p.tol);
        case ConstraintKind::asymptote:
            return asymptote_from(derivative_from(expr, plus_, minus_, h_), p.c, p.n);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

double rmse(std::span<const double> predicted, std::span<const double> observed) {
    if (predicted.size() != observed.size() || predicted.empty()) {
        throw std::invalid_argument("rmse: length mismatch or empty input");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - observed[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(predicted.size()));
}

FitnessEvaluator::FitnessEvaluator(const Dataset& data, FitnessConfig config)
    : data_(&data), config_(std::move(config)) {
    if (data.empty()) {
        throw std::invalid_argument("fitness: dataset is empty");
    }
    config_.validate();
    compiled_.reserve(config_.constraints.size());
    for (const auto& spec : config_.constraints) {
        compiled_.emplace_back(spec, data.x);
    }
}

double FitnessEvaluator::loss(const Expression& expr) const {
    thread_local std::vector<double> pred;
    pred.resize(data_->size());
    if (!eval_into(expr, data_->x, pred)) {
        return kFailureFitness;
    }
    const double l = rmse(pred, data_->y);
    return std::isfinite(l) ? l : kFailureFitness;
}

double FitnessEvaluator::total_penalty(const Expression& expr) const {
    double total = 0.0;
    for (const auto& c : compiled_) {
        total += c.penalty(expr);
    }
    return total;
}

FitnessResult FitnessEvaluator::evaluate(const Expression& expr, bool constraints_active) const {
    FitnessResult r;
    const double l = loss(expr);
    if (l >= kFailureFitness) {
        return r;
    }
    r.failed = false;
    r.loss = l;
    r.fitness = l;
    if (constraints_active && config_.lambda != 0.0 && !compiled_.empty()) {
        r.penalty = total_penalty(expr);
        r.fitness += config_.lambda * r.penalty;
    }
    r.fitness += config_.parsimony * static_cast<double>(complexity(expr));
    return r;
}

double fitness(const Expression& expr, const Dataset& data, const FitnessConfig& config, bool constraints_active) {
    return FitnessEvaluator(data, config).evaluate(expr, constraints_active).fitness;
}

}  // namespace eqlab
