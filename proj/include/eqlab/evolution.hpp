#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "eqlab/expr.hpp"
#include "eqlab/pareto.hpp"
#include "eqlab/penalties.hpp"

namespace eqlab {

enum class MutationKind : std::uint8_t { replace_leaf, perturb_constant, replace_operator, insert_node, delete_subtree };
inline constexpr std::size_t kMutationKindCount = 5;

std::string_view mutation_name(MutationKind k);

struct MutationConfig {
    /// Relative selection weights, indexed by MutationKind.
    std::array<double, kMutationKindCount> weights = {0.25, 0.25, 0.2, 0.15, 0.15};
    double constant_sigma = 0.1;  ///< constant *= 1 + N(0, sigma)
    std::size_t retries = 10;
    RandomExprOptions leaves;
};

struct EvolutionConfig {
    std::size_t population_count = 100;
    std::size_t population_size = 27;
    std::size_t iterations = 100;
    std::size_t tournament_size = 5;
    double tournament_probability = 0.9;
    double crossover_probability = 0.2;
    double mutation_probability = 0.9;
    std::size_t max_complexity = 30;
    std::size_t init_max_depth = 4;
    std::size_t migration_interval = 10;
    double migration_fraction = 0.05;
    std::size_t crossover_retries = 5;
    bool refit_constants = true;
    std::size_t refit_max_evaluations = 400;
    /// Per iteration, each island member with constants is polished with this
    /// probability using a short Nelder-Mead run.
    double optimize_probability = 0.1;
    std::size_t optimize_evaluations = 30;
    std::size_t threads = 1;  ///< 0 = hardware concurrency
    MutationConfig mutation;
    FitnessConfig fitness;
    std::uint64_t seed = 0;
    /// Subtrees counted in every iteration's census.
    std::vector<Expression> census_patterns;

    void validate() const;
};

struct MutationResult {
    Expression expr;
    MutationKind kind = MutationKind::replace_leaf;
    bool applied = false;
};

MutationKind choose_mutation_kind(const MutationConfig& config, Rng& rng);

/// Applies one mutation; the output respects the nesting rules and max_complexity.
/// Inapplicable or invalid draws are retried; after `retries` the input is returned.
MutationResult mutate(const Expression& expr, const OperatorSet& opset, std::size_t n_vars,
                      std::size_t max_complexity, const MutationConfig& config, Rng& rng);

/// Applies a specific mutation kind once (no retries, no validation).
std::optional<Expression> apply_mutation(const Expression& expr, MutationKind kind, const OperatorSet& opset,
                                         std::size_t n_vars, const MutationConfig& config, Rng& rng);

/// Swaps one uniformly chosen subtree pair. Invalid children (nesting or size)
/// are redrawn up to `retries` times, after which the parents come back unchanged.
std::pair<Expression, Expression> crossover(const Expression& a, const Expression& b, const OperatorSet& opset,
                                            std::size_t max_complexity, std::size_t retries, Rng& rng);

/// Random individual expressions satisfying nesting and max_complexity.
std::vector<Individual> init_population(const FitnessEvaluator& evaluator, const EvolutionConfig& config,
                                        const OperatorSet& opset, bool constraints_active, Rng& rng);

struct RefitOptions {
    std::size_t max_evaluations = 2000;
    std::size_t restarts = 2;
};

/// Derivative-free (Nelder-Mead) polish of the constants to reduce RMSE.
/// Structure is unchanged; the input is returned when nothing improves.
Expression refit_constants(const Expression& expr, const Dataset& data, const RefitOptions& options = {});

/// Occurrences of `pattern` as a subtree of `expr`. Variables match by index,
/// constants by value, add/mul in either operand order.
std::size_t count_matches(const Expression& expr, const Expression& pattern);

struct CensusRecord {
    std::size_t iteration = 0;
    std::vector<std::size_t> counts;  ///< one per pattern
};

/// Pattern counts pooled over the whole population.
CensusRecord count_subtrees(std::span<const Expression> population, std::span<const Expression> patterns,
                            std::size_t iteration = 0);

struct TraceRow {
    std::size_t iteration = 0;
    double best_loss = 0.0;
    double best_fitness = 0.0;
    double mean_complexity = 0.0;
    bool constraints_active = false;
};

struct EvolutionResult {
    ParetoFront hall_of_fame;
    /// Best individual per complexity (index = complexity), after the last phase.
    std::vector<Individual> hall_entries;
    std::vector<CensusRecord> census;
    std::vector<TraceRow> trace;
};

/// Island-model regularized evolution over `data`.
EvolutionResult evolve(const Dataset& data, const EvolutionConfig& config, const OperatorSet& opset);

std::string trace_csv(const std::vector<TraceRow>& trace);
std::string census_csv(const std::vector<CensusRecord>& census, std::span<const Expression> patterns,
                       std::span<const std::string> names = {});

}  // namespace eqlab
