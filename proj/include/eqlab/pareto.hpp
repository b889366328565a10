#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "eqlab/expr.hpp"
#include "eqlab/matrix.hpp"

namespace eqlab {

/// One member of a population.
struct Individual {
    Expression expr;
    double fitness = 0.0;
    double loss = 0.0;  ///< RMSE alone
    std::size_t complexity = 1;
    std::size_t age = 0;          ///< iteration in which it was created
    std::uint64_t birth = 0;      ///< creation order, used for tie-breaks
};

struct FrontEntry {
    std::size_t complexity = 0;
    double loss = 0.0;
    Expression expr;

    bool operator==(const FrontEntry&) const = default;
};

/// Non-dominated equations ordered by strictly increasing complexity and
/// strictly decreasing loss. Doubles as the query-by-committee committee.
struct ParetoFront {
    std::vector<FrontEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    /// Lowest-loss entry (the last one).
    const FrontEntry& best() const { return entries.back(); }
    /// Keeps the k lowest-loss entries (k = 0 keeps everything).
    ParetoFront top_k(std::size_t k) const;

    bool operator==(const ParetoFront&) const = default;
};

/// Lowest-loss representative per complexity, dominated complexities removed.
/// Equal losses resolve to the lower complexity, then the earlier candidate.
ParetoFront pareto_front(std::span<const Individual> individuals);

// ---------------------------------------------------------------------------
// Disagreement

enum class Measure { cv, ibmd };

std::string_view measure_name(Measure m);
std::optional<Measure> measure_from_name(std::string_view s);

inline constexpr double kDisagreementEpsilon = 1e-12;

/// sigma / max(|mu|, eps) with population sigma; nullopt with fewer than 2 values.
std::optional<double> cv_disagreement(std::span<const double> predictions);
/// Mean over pairs of ln(|a - b| / max(|a|, |b|, eps) + 1); nullopt with fewer than 2 values.
std::optional<double> ibmd_disagreement(std::span<const double> predictions);

/// Scores one point; members failing to evaluate at it are left out.
std::optional<double> cv_disagreement(const ParetoFront& committee, std::span<const double> point);
std::optional<double> ibmd_disagreement(const ParetoFront& committee, std::span<const double> point);

struct PointDisagreement {
    std::optional<double> cv;
    std::optional<double> ibmd;
    std::size_t valid_members = 0;

    std::optional<double> score(Measure m) const { return m == Measure::cv ? cv : ibmd; }
};

struct DisagreementReport {
    std::vector<PointDisagreement> points;
};

/// Both measures for every pool row.
DisagreementReport score_pool(const ParetoFront& committee, const Matrix& pool);

class CommitteeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PoolRanking {
    Measure measure = Measure::ibmd;
    /// Defined points by descending score (ties by index), then undefined points by index.
    std::vector<std::size_t> order;
    std::size_t defined_count = 0;
    DisagreementReport report;
};

/// Throws std::invalid_argument on an empty pool and CommitteeError when no
/// pool point has two valid committee predictions.
PoolRanking rank_pool(const ParetoFront& committee, const Matrix& pool, Measure measure);

}  // namespace eqlab
