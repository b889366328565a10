#include "eqlab/active.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "eqlab/random.hpp"

namespace eqlab {

namespace {

// Streams derived from a session seed.
constexpr std::uint64_t kPoolStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kInitialStream = 3;
constexpr std::uint64_t kRandomStream = 4;
constexpr std::uint64_t kCheckStream = 5;
constexpr std::uint64_t kEvolveStream = 1000;

Dataset subset(const Matrix& pool, std::span<const double> labels, std::span<const std::size_t> rows,
               std::vector<std::string> names) {
    Dataset d;
    d.x = pool.select_rows(rows);
    d.y.reserve(rows.size());
    for (std::size_t r : rows) {
        d.y.push_back(labels[r]);
    }
    d.names = std::move(names);
    return d;
}

double population_std(std::span<const double> v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mu) * (x - mu);
    }
    return std::sqrt(ss / static_cast<double>(v.size()));
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

struct BuiltinTarget {
    const char* name;
    const char* expr;
    std::vector<VariableDomain> domains;
};

const std::vector<BuiltinTarget>& builtin_targets() {
    static const std::vector<BuiltinTarget> targets = {
        {"gaussian", "sqrt(1 / (2 * 3.141592653589793)) * exp(-(square((x1 - x2) / sigma) / 2))",
         {{"x1", 1, 3}, {"x2", 1, 3}, {"sigma", 1, 3}}},
        {"gravity", "m1 * m2 / square(r)", {{"m1", 1, 5}, {"m2", 1, 5}, {"r", 1, 5}}},
        {"kinetic_energy", "0.5 * m * (square(v) + square(u) + square(w))",
         {{"m", 1, 5}, {"v", 1, 5}, {"u", 1, 5}, {"w", 1, 5}}},
        {"inverse_distance", "1 / sqrt(square(x2 - x1) + square(y2 - y1))",
         {{"x1", 1, 5}, {"x2", 1, 5}, {"y1", 1, 5}, {"y2", 1, 5}}},
        {"law_of_cosines", "sqrt(square(x1) + square(x2) - 2 * x1 * x2 * cos(theta1 - theta2))",
         {{"x1", 1, 5}, {"x2", 1, 5}, {"theta1", 1, 5}, {"theta2", 1, 5}}},
        {"quadratic_mixed", "square(x0) + x0 * x1", {{"x0", 1, 5}, {"x1", 1, 5}}},
        {"square", "square(x0)", {{"x0", 1, 5}}},
    };
    return targets;
}

}  // namespace

// ---------------------------------------------------------------------------
// Targets

std::vector<std::string> GroundTruth::names() const {
    std::vector<std::string> out;
    for (const auto& d : domains) {
        out.push_back(d.name);
    }
    return out;
}

void GroundTruth::validate() const {
    if (domains.empty()) {
        throw std::invalid_argument("target '" + name + "' has no variables");
    }
    for (const auto& d : domains) {
        if (!std::isfinite(d.low) || !std::isfinite(d.high) || !(d.low < d.high)) {
            throw std::invalid_argument("target '" + name + "': domain of '" + d.name + "' must satisfy low < high");
        }
    }
    if (expr.variable_span() > domains.size()) {
        throw std::invalid_argument("target '" + name + "' uses more variables than it declares");
    }
}

Matrix GroundTruth::sample(std::size_t rows, Rng& rng) const {
    Matrix m(rows, domains.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < domains.size(); ++c) {
            std::uniform_real_distribution<double> u(domains[c].low, domains[c].high);
            m(r, c) = u(rng);
        }
    }
    return m;
}

std::vector<double> GroundTruth::label(const Matrix& points) const {
    std::vector<double> y(points.rows());
    if (!eval_into(expr, points, y)) {
        throw std::domain_error("target '" + name + "' cannot be evaluated on the requested points");
    }
    return y;
}

GroundTruth make_target(std::string name, std::string_view expr, std::vector<VariableDomain> domains) {
    GroundTruth t;
    t.name = std::move(name);
    t.domains = std::move(domains);
    t.expr = fold_constants(parse(expr, OperatorSet::all(), t.names()));
    t.validate();
    return t;
}

std::vector<std::string> target_names() {
    std::vector<std::string> out;
    for (const auto& t : builtin_targets()) {
        out.emplace_back(t.name);
    }
    return out;
}

std::optional<GroundTruth> find_target(std::string_view name) {
    for (const auto& t : builtin_targets()) {
        if (name == t.name) {
            return make_target(t.name, t.expr, t.domains);
        }
    }
    return std::nullopt;
}

std::vector<double> inject_noise(std::span<const double> labels, double level, Rng& rng) {
    if (!(level >= 0.0)) {
        throw std::invalid_argument("noise level must be >= 0");
    }
    std::vector<double> out(labels.begin(), labels.end());
    if (level == 0.0) {
        return out;
    }
    std::normal_distribution<double> n(0.0, 1.0);
    const double scale = level * population_std(labels);
    for (double& y : out) {
        y += scale * n(rng);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rediscovery

void RediscoveryCriterion::validate() const {
    if (!(loss_drop_decades > 0.0)) {
        throw std::invalid_argument("loss_drop_decades must be > 0");
    }
    if (equivalence_samples < 100) {
        throw std::invalid_argument("equivalence_samples must be >= 100");
    }
    if (!(equivalence_rel_tol > 0.0)) {
        throw std::invalid_argument("equivalence_rel_tol must be > 0");
    }
}

RediscoveryResult check_rediscovery(const ParetoFront& front, const GroundTruth& truth,
                                    const RediscoveryCriterion& criterion, const Dataset& labeled,
                                    std::uint64_t seed) {
    RediscoveryResult out;
    if (front.empty()) {
        return out;
    }
    auto hit = [&](std::size_t i, const char* via, Expression e) {
        out.found = true;
        out.entry = i;
        out.via = via;
        out.matched = std::move(e);
        return out;
    };

    if (criterion.use_loss_cliff && !labeled.empty()) {
        double previous = population_std(labeled.y);  // RMSE of the constant-mean model
        for (std::size_t i = 0; i < front.size(); ++i) {
            const auto& e = front.entries[i];
            const bool enough_data = e.expr.constant_count() < labeled.size();
            const bool cliff = e.loss == 0.0 ? previous > 0.0
                                             : std::log10(previous / e.loss) >= criterion.loss_drop_decades;
            if (cliff && enough_data) {
                return hit(i, "loss_cliff", e.expr);
            }
            previous = e.loss;
        }
    }

    if (criterion.use_equivalence) {
        Rng fit_rng = derive_rng(seed, 1);
        Rng check_rng = derive_rng(seed, 2);
        Dataset fit;
        fit.x = truth.sample(criterion.equivalence_samples, fit_rng);
        fit.y = truth.label(fit.x);
        const Matrix check_x = truth.sample(criterion.equivalence_samples, check_rng);
        const auto check_y = truth.label(check_x);
        double scale = 0.0;
        for (double y : check_y) {
            scale += y * y;
        }
        scale = std::sqrt(scale / static_cast<double>(check_y.size()));
        std::vector<double> pred(check_y.size());
        for (std::size_t i = 0; i < front.size(); ++i) {
            Expression e = front.entries[i].expr;
            if (e.variable_span() > truth.dims()) {
                continue;
            }
            if (e.constant_count() > 0) {
                e = refit_constants(e, fit, {criterion.refit_evaluations, 2});
            }
            if (!eval_into(e, check_x, pred)) {
                continue;
            }
            if (rmse(pred, check_y) <= criterion.equivalence_rel_tol * std::max(scale, 1e-300)) {
                return hit(i, "equivalence", std::move(e));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Active loop

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::qbc_ibmd: return "qbc_ibmd";
        case Strategy::qbc_cv: return "qbc_cv";
        case Strategy::random: return "random";
    }
    return "?";
}

std::optional<Strategy> strategy_from_name(std::string_view s) {
    for (Strategy k : {Strategy::qbc_ibmd, Strategy::qbc_cv, Strategy::random}) {
        if (s == strategy_name(k)) {
            return k;
        }
    }
    return std::nullopt;
}

void ActiveConfig::validate() const {
    if (initial_points < 2) {
        throw std::invalid_argument("initial_points must be >= 2");
    }
    if (pool_size <= initial_points) {
        throw std::invalid_argument("pool_size must exceed initial_points");
    }
    if (max_rounds < 1) {
        throw std::invalid_argument("max_rounds must be >= 1");
    }
    if (!(noise_level >= 0.0)) {
        throw std::invalid_argument("noise_level must be >= 0");
    }
    evolution.validate();
    opset.validate();
    criterion.validate();
}

SessionTrace run_active_session(const GroundTruth& truth, Strategy strategy, const ActiveConfig& config,
                                std::uint64_t seed) {
    config.validate();
    truth.validate();

    Rng pool_rng = derive_rng(seed, kPoolStream);
    const Matrix pool = truth.sample(config.pool_size, pool_rng);
    Rng noise_rng = derive_rng(seed, kNoiseStream);
    const auto labels = inject_noise(truth.label(pool), config.noise_level, noise_rng);

    std::vector<std::size_t> order(config.pool_size);
    std::iota(order.begin(), order.end(), 0);
    Rng initial_rng = derive_rng(seed, kInitialStream);
    std::shuffle(order.begin(), order.end(), initial_rng);
    std::vector<std::size_t> labeled(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.initial_points));
    std::vector<bool> taken(config.pool_size, false);
    for (std::size_t i : labeled) {
        taken[i] = true;
    }

    Rng random_rng = derive_rng(seed, kRandomStream);
    SessionTrace trace;
    const auto names = truth.names();

    for (std::size_t round = 0; round < config.max_rounds; ++round) {
        const Dataset data = subset(pool, labels, labeled, names);
        EvolutionConfig evo = config.evolution;
        evo.seed = derive_seed(seed, kEvolveStream + round);
        const auto result = evolve(data, evo, config.opset);
        const ParetoFront& front = result.hall_of_fame;

        RoundRecord rec;
        rec.round = round;
        rec.points_used = labeled.size();
        rec.front_size = front.size();
        if (!front.empty()) {
            rec.best_loss = front.best().loss;
            rec.best_expr = format(front.best().expr, names);
        }
        const auto found = check_rediscovery(front, truth, config.criterion, data, derive_seed(seed, kCheckStream));
        rec.rediscovered = found.found;
        if (found.found) {
            trace.rediscovered = true;
            trace.via = found.via;
            trace.matched = format(found.matched, names);
            trace.rounds.push_back(rec);
            break;
        }
        if (labeled.size() == config.pool_size || round + 1 == config.max_rounds) {
            trace.rounds.push_back(rec);
            break;
        }

        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < config.pool_size; ++i) {
            if (!taken[i]) {
                open.push_back(i);
            }
        }
        std::optional<std::size_t> pick;
        if (strategy != Strategy::random && !front.empty()) {
            ++trace.committee_queries;
            const Measure m = strategy == Strategy::qbc_cv ? Measure::cv : Measure::ibmd;
            try {
                const auto ranking = rank_pool(front.top_k(config.committee_top_k), pool.select_rows(open), m);
                const std::size_t best = ranking.order.front();
                pick = open[best];
                rec.score = ranking.report.points[best].score(m);
            } catch (const CommitteeError&) {
                rec.fallback_random = true;
            }
        }
        if (!pick) {
            std::uniform_int_distribution<std::size_t> u(0, open.size() - 1);
            pick = open[u(random_rng)];
        }
        rec.queried = pick;
        taken[*pick] = true;
        labeled.push_back(*pick);
        trace.rounds.push_back(rec);
    }
    trace.points_used = labeled.size();
    trace.labeled = std::move(labeled);
    return trace;
}

RediscoveryResult run_fixed_sample_trial(const GroundTruth& truth, std::size_t pool_size, std::size_t sample_size,
                                         const EvolutionConfig& evolution, const OperatorSet& opset,
                                         const RediscoveryCriterion& criterion, std::uint64_t seed) {
    if (sample_size < 1 || sample_size > pool_size) {
        throw std::invalid_argument("sample_size must be in [1, pool_size]");
    }
    Rng pool_rng = derive_rng(seed, kPoolStream);
    const Matrix pool = truth.sample(pool_size, pool_rng);
    const auto labels = truth.label(pool);
    std::vector<std::size_t> order(pool_size);
    std::iota(order.begin(), order.end(), 0);
    Rng initial_rng = derive_rng(seed, kInitialStream);
    std::shuffle(order.begin(), order.end(), initial_rng);
    order.resize(sample_size);
    const Dataset data = subset(pool, labels, order, truth.names());
    EvolutionConfig evo = evolution;
    evo.seed = derive_seed(seed, kEvolveStream);
    const auto result = evolve(data, evo, opset);
    return check_rediscovery(result.hall_of_fame, truth, criterion, data, derive_seed(seed, kCheckStream));
}

// ---------------------------------------------------------------------------
// Benchmark

void BenchmarkSpec::validate() const {
    if (cases.empty()) {
        throw std::invalid_argument("benchmark needs at least one target");
    }
    if (strategies.empty() || noise_levels.empty()) {
        throw std::invalid_argument("benchmark needs at least one strategy and one noise level");
    }
    if (repeats < 1) {
        throw std::invalid_argument("repeats must be >= 1");
    }
    for (const auto& c : cases) {
        c.truth.validate();
        for (const auto& k : c.constraints) {
            k.validate();
        }
    }
    base.validate();
}

BenchmarkResult run_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    std::vector<RunRecord> runs;
    for (const auto& c : spec.cases) {
        for (double noise : spec.noise_levels) {
            for (Strategy s : spec.strategies) {
                for (std::size_t r = 0; r < spec.repeats; ++r) {
                    RunRecord rec;
                    rec.target = c.truth.name;
                    rec.variant = c.variant;
                    rec.strategy = s;
                    rec.noise = noise;
                    rec.repeat = r;
                    rec.seed = derive_seed(spec.seed, r);
                    runs.push_back(std::move(rec));
                }
            }
        }
    }
    const std::size_t cells = spec.noise_levels.size() * spec.strategies.size() * spec.repeats;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        RunRecord& rec = runs[i];
        const BenchmarkCase& c = spec.cases[i / cells];
        ActiveConfig cfg = spec.base;
        cfg.noise_level = rec.noise;
        cfg.evolution.fitness.constraints = c.constraints;
        cfg.evolution.fitness.constraint_schedule = c.constraint_schedule;
        try {
            const auto t = run_active_session(c.truth, rec.strategy, cfg, rec.seed);
            rec.rediscovered = t.rediscovered;
            rec.points_used = t.points_used;
            rec.rounds = t.rounds.size();
            rec.via = t.via;
            rec.matched = t.matched;
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
    }
    BenchmarkResult result;
    result.summary = summarize(runs);
    result.runs = std::move(runs);
    return result;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs) {
    std::vector<SummaryRow> rows;
    std::vector<std::vector<double>> points;
    auto find_row = [&](const RunRecord& r) -> std::size_t {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].target == r.target && rows[i].variant == r.variant && rows[i].strategy == r.strategy &&
                rows[i].noise == r.noise) {
                return i;
            }
        }
        SummaryRow s;
        s.target = r.target;
        s.variant = r.variant;
        s.strategy = r.strategy;
        s.noise = r.noise;
        rows.push_back(s);
        points.emplace_back();
        return rows.size() - 1;
    };
    for (const auto& r : runs) {
        const std::size_t i = find_row(r);
        ++rows[i].runs;
        if (!r.error.empty()) {
            ++rows[i].errors;
        } else if (r.rediscovered) {
            ++rows[i].rediscovered;
            points[i].push_back(static_cast<double>(r.points_used));
        }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].rate = static_cast<double>(rows[i].rediscovered) / static_cast<double>(rows[i].runs);
        auto& p = points[i];
        if (p.empty()) {
            continue;
        }
        rows[i].mean_points = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
        std::sort(p.begin(), p.end());
        const std::size_t n = p.size();
        rows[i].median_points = n % 2 ? p[n / 2] : 0.5 * (p[n / 2 - 1] + p[n / 2]);
    }
    return rows;
}

std::string runs_csv(const BenchmarkResult& result) {
    std::ostringstream out;
    out << "target,variant,strategy,noise,repeat,seed,rediscovered,points_used,rounds,via,matched,error\n";
    for (const auto& r : result.runs) {
        out << csv_field(r.target) << ',' << csv_field(r.variant) << ',' << strategy_name(r.strategy) << ','
            << format_number(r.noise) << ',' << r.repeat << ',' << r.seed << ',' << (r.rediscovered ? 1 : 0) << ','
            << r.points_used << ',' << r.rounds << ',' << r.via << ',' << csv_field(r.matched) << ','
            << csv_field(r.error) << '\n';
    }
    return out.str();
}

std::string summary_csv(const BenchmarkResult& result) {
    std::ostringstream out;
    out << "target,variant,strategy,noise,runs,rediscovered,errors,rate,mean_points,median_points\n";
    for (const auto& s : result.summary) {
        out << csv_field(s.target) << ',' << csv_field(s.variant) << ',' << strategy_name(s.strategy) << ','
            << format_number(s.noise) << ',' << s.runs << ',' << s.rediscovered << ',' << s.errors << ','
            << format_number(s.rate) << ',' << (s.mean_points ? format_number(*s.mean_points) : "") << ','
            << (s.median_points ? format_number(*s.median_points) : "") << '\n';
    }
    return out.str();
}

std::string summary_json(const BenchmarkResult& result) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& s : result.summary) {
        nlohmann::ordered_json row;
        row["target"] = s.target;
        row["variant"] = s.variant;
        row["strategy"] = strategy_name(s.strategy);
        row["noise"] = s.noise;
        row["runs"] = s.runs;
        row["rediscovered"] = s.rediscovered;
        row["errors"] = s.errors;
        row["rate"] = s.rate;
        row["mean_points"] = s.mean_points ? nlohmann::ordered_json(*s.mean_points) : nlohmann::ordered_json();
        row["median_points"] = s.median_points ? nlohmann::ordered_json(*s.median_points) : nlohmann::ordered_json();
        doc.push_back(std::move(row));
    }
    return doc.dump(2) + "\n";
}

}  // namespace eqlab
