#include "eqlab/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace eqlab {

ParetoFront ParetoFront::top_k(std::size_t k) const {
    if (k == 0 || k >= entries.size()) {
        return *this;
    }
    // Losses decrease along the front, so the k best are the last k.
    ParetoFront out;
    out.entries.assign(entries.end() - static_cast<std::ptrdiff_t>(k), entries.end());
    return out;
}

ParetoFront pareto_front(std::span<const Individual> individuals) {
    std::map<std::size_t, const Individual*> best;
    for (const auto& ind : individuals) {
        if (!std::isfinite(ind.loss)) {
            continue;
        }
        auto [it, inserted] = best.try_emplace(ind.complexity, &ind);
        if (!inserted && ind.loss < it->second->loss) {
            it->second = &ind;
        }
    }
    ParetoFront front;
    double floor = std::numeric_limits<double>::infinity();
    for (const auto& [c, ind] : best) {
        if (ind->loss < floor) {
            front.entries.push_back({c, ind->loss, ind->expr});
            floor = ind->loss;
        }
    }
    return front;
}

// ---------------------------------------------------------------------------

std::string_view measure_name(Measure m) { return m == Measure::cv ? "cv" : "ibmd"; }

std::optional<Measure> measure_from_name(std::string_view s) {
    if (s == "cv" || s == "CV") {
        return Measure::cv;
    }
    if (s == "ibmd" || s == "IBMD") {
        return Measure::ibmd;
    }
    return std::nullopt;
}

std::optional<double> cv_disagreement(std::span<const double> p) {
    if (p.size() < 2) {
        return std::nullopt;
    }
    const double n = static_cast<double>(p.size());
    const double mu = std::accumulate(p.begin(), p.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : p) {
        ss += (v - mu) * (v - mu);
    }
    const double sigma = std::sqrt(ss / n);
    return sigma / std::max(std::fabs(mu), kDisagreementEpsilon);
}

std::optional<double> ibmd_disagreement(std::span<const double> p) {
    if (p.size() < 2) {
        return std::nullopt;
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = i + 1; j < p.size(); ++j) {
            const double denom = std::max({std::fabs(p[i]), std::fabs(p[j]), kDisagreementEpsilon});
            total += std::log(std::fabs(p[i] - p[j]) / denom + 1.0);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

namespace {

std::vector<double> valid_predictions(const ParetoFront& committee, std::span<const double> point) {
    std::vector<double> out;
    for (const auto& e : committee.entries) {
        const auto o = eval(e.expr, point);
        if (o.ok()) {
            out.push_back(o.value);
        }
    }
    return out;
}

}  // namespace

std::optional<double> cv_disagreement(const ParetoFront& committee, std::span<const double> point) {
    return cv_disagreement(valid_predictions(committee, point));
}

std::optional<double> ibmd_disagreement(const ParetoFront& committee, std::span<const double> point) {
    return ibmd_disagreement(valid_predictions(committee, point));
}

DisagreementReport score_pool(const ParetoFront& committee, const Matrix& pool) {
    const std::size_t rows = pool.rows();
    // predictions[m][r]; NaN marks a failed member.
    std::vector<std::vector<double>> predictions(committee.size(), std::vector<double>(rows));
    for (std::size_t m = 0; m < committee.size(); ++m) {
        eval_into(committee.entries[m].expr, pool, predictions[m]);
    }
    DisagreementReport report;
    report.points.resize(rows);
    std::vector<double> column;
    for (std::size_t r = 0; r < rows; ++r) {
        column.clear();
        for (std::size_t m = 0; m < committee.size(); ++m) {
            if (!std::isnan(predictions[m][r])) {
                column.push_back(predictions[m][r]);
            }
        }
        auto& pt = report.points[r];
        pt.valid_members = column.size();
        pt.cv = cv_disagreement(column);
        pt.ibmd = ibmd_disagreement(column);
    }
    return report;
}

PoolRanking rank_pool(const ParetoFront& committee, const Matrix& pool, Measure measure) {
    if (pool.rows() == 0) {
        throw std::invalid_argument("rank_pool: pool is empty");
    }
    PoolRanking ranking;
    ranking.measure = measure;
    ranking.report = score_pool(committee, pool);
    std::vector<std::size_t> defined;
    std::vector<std::size_t> undefined;
    for (std::size_t r = 0; r < pool.rows(); ++r) {
        (ranking.report.points[r].score(measure) ? defined : undefined).push_back(r);
    }
    if (defined.empty()) {
        throw CommitteeError("committee is degenerate: no pool point has two valid predictions");
    }
    const auto& pts = ranking.report.points;
    std::stable_sort(defined.begin(), defined.end(), [&](std::size_t a, std::size_t b) {
        return *pts[a].score(measure) > *pts[b].score(measure);
    });
    ranking.defined_count = defined.size();
    ranking.order = std::move(defined);
    ranking.order.insert(ranking.order.end(), undefined.begin(), undefined.end());
    return ranking;
}

}  // namespace eqlab
