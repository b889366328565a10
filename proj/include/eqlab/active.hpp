#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqlab/evolution.hpp"
#include "eqlab/expr.hpp"
#include "eqlab/pareto.hpp"
#include "eqlab/penalties.hpp"
#include "eqlab/random.hpp"

namespace eqlab {

struct VariableDomain {
    std::string name;
    double low = 0.0;
    double high = 1.0;
};

/// A known equation that answers label queries in oracle mode.
struct GroundTruth {
    std::string name;
    Expression expr;
    std::vector<VariableDomain> domains;

    std::size_t dims() const { return domains.size(); }
    std::vector<std::string> names() const;
    /// Throws std::invalid_argument on empty or inverted domains, or on an
    /// expression that uses more variables than domains.
    void validate() const;
    /// Uniform samples from the domain box, one row per sample.
    Matrix sample(std::size_t rows, Rng& rng) const;
    /// Clean labels; throws std::domain_error if the truth fails to evaluate.
    std::vector<double> label(const Matrix& points) const;
};

/// Builds a target from an infix expression over the domain names.
GroundTruth make_target(std::string name, std::string_view expr, std::vector<VariableDomain> domains);

/// Names of the built-in targets.
std::vector<std::string> target_names();
/// Built-in target by name, nullopt when unknown.
std::optional<GroundTruth> find_target(std::string_view name);

/// Additive Gaussian noise scaled by the sample standard deviation of the labels:
/// y_i + N(0, level * std(y)). level 0 returns the input unchanged.
std::vector<double> inject_noise(std::span<const double> labels, double level, Rng& rng);

struct RediscoveryCriterion {
    double loss_drop_decades = 10.0;
    std::size_t equivalence_samples = 200;
    double equivalence_rel_tol = 1e-6;
    bool use_loss_cliff = true;
    bool use_equivalence = true;
    std::size_t refit_evaluations = 1500;

    void validate() const;
};

struct RediscoveryResult {
    bool found = false;
    std::optional<std::size_t> entry;  ///< index into the front
    std::string via;                   ///< "loss_cliff" or "equivalence"
    Expression matched;
};

/// True when a front entry (a) drops the loss by at least loss_drop_decades
/// relative to the previous entry (the first entry is compared against the
/// constant-mean baseline on `labeled`) while having fewer constants than
/// labeled rows, or (b) matches the truth on fresh domain samples within
/// equivalence_rel_tol (relative RMSE) after its constants are refit on a
/// separate set of truth samples.
RediscoveryResult check_rediscovery(const ParetoFront& front, const GroundTruth& truth,
                                    const RediscoveryCriterion& criterion, const Dataset& labeled,
                                    std::uint64_t seed);

enum class Strategy { qbc_ibmd, qbc_cv, random };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(std::string_view s);

struct ActiveConfig {
    std::size_t pool_size = 100;
    std::size_t initial_points = 3;
    std::size_t max_rounds = 50;
    double noise_level = 0.0;
    std::size_t committee_top_k = 0;  ///< 0 = whole front
    EvolutionConfig evolution;
    OperatorSet opset = OperatorSet::defaults();
    RediscoveryCriterion criterion;

    void validate() const;
};

struct RoundRecord {
    std::size_t round = 0;
    std::size_t points_used = 0;
    double best_loss = 0.0;
    std::string best_expr;
    std::size_t front_size = 0;
    bool rediscovered = false;
    std::optional<std::size_t> queried;  ///< pool index labeled after this round
    std::optional<double> score;         ///< disagreement of the queried point
    bool fallback_random = false;        ///< committee was degenerate
};

struct SessionTrace {
    bool rediscovered = false;
    std::size_t points_used = 0;
    std::string via;
    std::string matched;
    std::vector<std::size_t> labeled;  ///< pool indices in labeling order
    std::vector<RoundRecord> rounds;
    std::size_t committee_queries = 0;
};

/// Oracle-mode active learning on one target. The pool, the initial points and
/// the noise draws depend only on `seed`, so two strategies run with the same
/// seed start from identical state (paired comparison).
SessionTrace run_active_session(const GroundTruth& truth, Strategy strategy, const ActiveConfig& config,
                                std::uint64_t seed);

/// One evolution on `sample_size` points drawn from a pool of `pool_size`,
/// followed by the rediscovery check (no active learning).
RediscoveryResult run_fixed_sample_trial(const GroundTruth& truth, std::size_t pool_size, std::size_t sample_size,
                                         const EvolutionConfig& evolution, const OperatorSet& opset,
                                         const RediscoveryCriterion& criterion, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Benchmark harness

/// One target under one constraint set ("variant").
struct BenchmarkCase {
    GroundTruth truth;
    std::string variant = "none";
    std::vector<ConstraintSpec> constraints;
    std::optional<std::size_t> constraint_schedule;
};

struct BenchmarkSpec {
    std::vector<BenchmarkCase> cases;
    std::vector<Strategy> strategies = {Strategy::qbc_ibmd};
    std::vector<double> noise_levels = {0.0};
    std::size_t repeats = 1;
    std::uint64_t seed = 0;
    ActiveConfig base;

    void validate() const;
};

struct RunRecord {
    std::string target;
    std::string variant;
    Strategy strategy = Strategy::qbc_ibmd;
    double noise = 0.0;
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    bool rediscovered = false;
    std::size_t points_used = 0;
    std::size_t rounds = 0;
    std::string via;
    std::string matched;
    std::string error;
};

struct SummaryRow {
    std::string target;
    std::string variant;
    Strategy strategy = Strategy::qbc_ibmd;
    double noise = 0.0;
    std::size_t runs = 0;
    std::size_t rediscovered = 0;
    std::size_t errors = 0;
    double rate = 0.0;
    std::optional<double> mean_points;    ///< over rediscovered runs only
    std::optional<double> median_points;
};

struct BenchmarkResult {
    std::vector<RunRecord> runs;
    std::vector<SummaryRow> summary;
};

/// Full factorial over cases x strategies x noise levels x repeats. Repeat r
/// uses the same seed in every cell, so cells are paired. Per-run exceptions
/// are recorded in RunRecord::error.
BenchmarkResult run_benchmark(const BenchmarkSpec& spec);

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs);

std::string runs_csv(const BenchmarkResult& result);
std::string summary_csv(const BenchmarkResult& result);
std::string summary_json(const BenchmarkResult& result);

}  // namespace eqlab
