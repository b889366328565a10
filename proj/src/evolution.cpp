#include "eqlab/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "eqlab/optimize.hpp"
#include "eqlab/random.hpp"

namespace eqlab {

namespace {

constexpr std::array<std::string_view, kMutationKindCount> kMutationNames = {
    "replace_leaf", "perturb_constant", "replace_operator", "insert_node", "delete_subtree"};

template <typename Pred>
std::vector<std::size_t> indices_where(const Expression& e, Pred pred) {
    std::vector<std::size_t> out;
    const auto nodes = e.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (pred(nodes[i])) {
            out.push_back(i);
        }
    }
    return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
}

bool valid(const Expression& e, const OperatorSet& opset, std::size_t max_complexity) {
    return complexity(e) <= max_complexity && check_nesting(e, opset);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) {
                fn(i);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

}  // namespace

std::string_view mutation_name(MutationKind k) { return kMutationNames[static_cast<std::size_t>(k)]; }

void EvolutionConfig::validate() const {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
        }
    };
    prob(tournament_probability, "tournament_probability");
    prob(crossover_probability, "crossover_probability");
    prob(mutation_probability, "mutation_probability");
    prob(optimize_probability, "optimize_probability");
    prob(migration_fraction, "migration_fraction");
    if (population_size < 2 || tournament_size < 1 || population_count < 1) {
        throw std::invalid_argument("population_size must be >= 2 and population_count >= 1");
    }
    if (iterations < 1) {
        throw std::invalid_argument("iterations must be >= 1");
    }
    if (max_complexity < 1 || init_max_depth < 1) {
        throw std::invalid_argument("max_complexity and init_max_depth must be >= 1");
    }
    double total = 0.0;
    for (double w : mutation.weights) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("mutation weights must be >= 0");
        }
        total += w;
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("mutation weights must not all be zero");
    }
    fitness.validate();
}

// ---------------------------------------------------------------------------
// Variation operators

MutationKind choose_mutation_kind(const MutationConfig& config, Rng& rng) {
    std::discrete_distribution<std::size_t> d(config.weights.begin(), config.weights.end());
    return static_cast<MutationKind>(d(rng));
}

std::optional<Expression> apply_mutation(const Expression& expr, MutationKind kind, const OperatorSet& opset,
                                         std::size_t n_vars, const MutationConfig& config, Rng& rng) {
    switch (kind) {
        case MutationKind::replace_leaf: {
            const auto leaves = indices_where(expr, [](const Node& n) { return n.is_leaf(); });
            return expr.replace_subtree(pick(leaves, rng), random_leaf(n_vars, rng, config.leaves));
        }
        case MutationKind::perturb_constant: {
            const auto consts = indices_where(expr, [](const Node& n) { return n.kind == NodeKind::constant; });
            if (consts.empty()) {
                return std::nullopt;
            }
            const std::size_t i = pick(consts, rng);
            std::normal_distribution<double> noise(0.0, config.constant_sigma);
            auto values = expr.constants();
            const std::size_t which = static_cast<std::size_t>(std::find(consts.begin(), consts.end(), i) - consts.begin());
            values[which] *= 1.0 + noise(rng);
            return expr.with_constants(values);
        }
        case MutationKind::replace_operator: {
            const auto ops = indices_where(expr, [](const Node& n) { return !n.is_leaf(); });
            if (ops.empty()) {
                return std::nullopt;
            }
            const std::size_t i = pick(ops, rng);
            auto nodes = std::vector<Node>(expr.nodes().begin(), expr.nodes().end());
            Node& n = nodes[i];
            if (n.kind == NodeKind::unary) {
                std::vector<UnaryOp> choices;
                for (UnaryOp op : opset.unary_ops) {
                    if (op != n.unary_op()) {
                        choices.push_back(op);
                    }
                }
                if (choices.empty()) {
                    return std::nullopt;
                }
                n.op = static_cast<std::uint8_t>(pick(choices, rng));
            } else {
                std::vector<BinaryOp> choices;
                for (BinaryOp op : opset.binary_ops) {
                    if (op != n.binary_op()) {
                        choices.push_back(op);
                    }
                }
                if (choices.empty()) {
                    return std::nullopt;
                }
                n.op = static_cast<std::uint8_t>(pick(choices, rng));
            }
            return Expression::from_prefix(std::move(nodes));
        }
        case MutationKind::insert_node: {
            std::uniform_int_distribution<std::size_t> at(0, expr.size() - 1);
            const std::size_t i = at(rng);
            const auto sub = expr.subtree(i);
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            const bool use_unary = !opset.unary_ops.empty() && (opset.binary_ops.empty() || u01(rng) < 0.5);
            if (use_unary) {
                return expr.replace_subtree(i, Expression::unary(pick(opset.unary_ops, rng), sub));
            }
            const BinaryOp op = pick(opset.binary_ops, rng);
            const auto leaf = random_leaf(n_vars, rng, config.leaves);
            const bool leaf_left = u01(rng) < 0.5;
            return expr.replace_subtree(i, leaf_left ? Expression::binary(op, leaf, sub) : Expression::binary(op, sub, leaf));
        }
        case MutationKind::delete_subtree: {
            const auto ops = indices_where(expr, [](const Node& n) { return !n.is_leaf(); });
            if (ops.empty()) {
                return std::nullopt;
            }
            const std::size_t i = pick(ops, rng);
            std::size_t child = i + 1;
            if (expr.node(i).kind == NodeKind::binary) {
                std::bernoulli_distribution right(0.5);
                if (right(rng)) {
                    child = expr.subtree_end(i + 1);
                }
            }
            return expr.replace_subtree(i, expr.subtree(child));
        }
    }
    return std::nullopt;
}

MutationResult mutate(const Expression& expr, const OperatorSet& opset, std::size_t n_vars,
                      std::size_t max_complexity, const MutationConfig& config, Rng& rng) {
    for (std::size_t attempt = 0; attempt <= config.retries; ++attempt) {
        const MutationKind kind = choose_mutation_kind(config, rng);
        auto out = apply_mutation(expr, kind, opset, n_vars, config, rng);
        if (out && valid(*out, opset, max_complexity)) {
            return {std::move(*out), kind, true};
        }
    }
    return {expr, MutationKind::replace_leaf, false};
}

std::pair<Expression, Expression> crossover(const Expression& a, const Expression& b, const OperatorSet& opset,
                                            std::size_t max_complexity, std::size_t retries, Rng& rng) {
    std::uniform_int_distribution<std::size_t> ia(0, a.size() - 1);
    std::uniform_int_distribution<std::size_t> ib(0, b.size() - 1);
    for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
        const std::size_t i = ia(rng);
        const std::size_t j = ib(rng);
        auto child_a = a.replace_subtree(i, b.subtree(j));
        auto child_b = b.replace_subtree(j, a.subtree(i));
        if (valid(child_a, opset, max_complexity) && valid(child_b, opset, max_complexity)) {
            return {std::move(child_a), std::move(child_b)};
        }
    }
    return {a, b};
}

// ---------------------------------------------------------------------------
// Constant refit


Expression refit_constants(const Expression& expr, const Dataset& data, const RefitOptions& options) {
    const std::size_t k = expr.constant_count();
    if (k == 0 || data.empty()) {
        return expr;
    }
    std::vector<Node> nodes(expr.nodes().begin(), expr.nodes().end());
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].kind == NodeKind::constant) {
            slots.push_back(i);
        }
    }
    std::vector<double> pred(data.size());
    auto objective = [&](const std::vector<double>& x) {
        for (std::size_t c = 0; c < k; ++c) {
            if (!std::isfinite(x[c])) {
                return kFailureFitness;
            }
            nodes[slots[c]].value = x[c];
        }
        const auto candidate = Expression::from_prefix(nodes);
        if (!eval_into(candidate, data.x, pred)) {
            return kFailureFitness;
        }
        const double l = rmse(pred, data.y);
        return std::isfinite(l) ? l : kFailureFitness;
    };
    auto x = expr.constants();
    const double f_start = objective(x);
    double f_best = f_start;
    const std::size_t per_round = std::max<std::size_t>(options.max_evaluations / (options.restarts + 1), 2 * k + 4);
    for (std::size_t round = 0; round <= options.restarts; ++round) {
        auto [xn, fn] = nelder_mead(objective, x, f_best, per_round);
        if (fn < f_best) {
            x = std::move(xn);
            f_best = fn;
        } else if (round > 0) {
            break;
        }
    }
    if (!(f_best < f_start)) {
        return expr;
    }
    return expr.with_constants(x);
}

// ---------------------------------------------------------------------------
// Census

namespace {

bool match_at(const Expression& e, std::size_t i, const std::vector<std::size_t>& e_end, const Expression& p,
              std::size_t j, const std::vector<std::size_t>& p_end) {
    const Node& a = e.node(i);
    const Node& b = p.node(j);
    if (a.kind != b.kind) {
        return false;
    }
    switch (a.kind) {
        case NodeKind::constant: return a.value == b.value;
        case NodeKind::variable: return a.var == b.var;
        case NodeKind::unary: return a.op == b.op && match_at(e, i + 1, e_end, p, j + 1, p_end);
        case NodeKind::binary: {
            if (a.op != b.op) {
                return false;
            }
            const std::size_t el = i + 1;
            const std::size_t er = e_end[i + 1];
            const std::size_t pl = j + 1;
            const std::size_t pr = p_end[j + 1];
            if (match_at(e, el, e_end, p, pl, p_end) && match_at(e, er, e_end, p, pr, p_end)) {
                return true;
            }
            return is_commutative(a.binary_op()) && match_at(e, el, e_end, p, pr, p_end) &&
                   match_at(e, er, e_end, p, pl, p_end);
        }
    }
    return false;
}

}  // namespace

std::size_t count_matches(const Expression& expr, const Expression& pattern) {
    if (pattern.size() > expr.size()) {
        return 0;
    }
    const auto e_end = expr.subtree_ends();
    const auto p_end = pattern.subtree_ends();
    std::size_t count = 0;
    for (std::size_t i = 0; i < expr.size(); ++i) {
        if (e_end[i] - i == pattern.size() && match_at(expr, i, e_end, pattern, 0, p_end)) {
            ++count;
        }
    }
    return count;
}

CensusRecord count_subtrees(std::span<const Expression> population, std::span<const Expression> patterns,
                            std::size_t iteration) {
    CensusRecord rec;
    rec.iteration = iteration;
    rec.counts.assign(patterns.size(), 0);
    for (const auto& e : population) {
        for (std::size_t p = 0; p < patterns.size(); ++p) {
            rec.counts[p] += count_matches(e, patterns[p]);
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Population and evolution loop

namespace {

Individual make_individual(Expression expr, const FitnessEvaluator& evaluator, bool active, std::size_t age,
                           std::uint64_t birth) {
    Individual ind;
    const auto r = evaluator.evaluate(expr, active);
    ind.fitness = r.fitness;
    ind.loss = r.loss;
    ind.complexity = complexity(expr);
    ind.expr = std::move(expr);
    ind.age = age;
    ind.birth = birth;
    return ind;
}

bool better(const Individual& a, const Individual& b) {
    return a.fitness < b.fitness || (a.fitness == b.fitness && a.birth < b.birth);
}

struct Island {
    std::vector<Individual> members;
    Rng rng;
    std::uint64_t next_birth = 0;
};

std::size_t tournament(const std::vector<Individual>& pop, const EvolutionConfig& cfg, Rng& rng) {
    std::uniform_int_distribution<std::size_t> d(0, pop.size() - 1);
    const std::size_t k = std::min(cfg.tournament_size, pop.size());
    std::vector<std::size_t> entrants(k);
    for (auto& e : entrants) {
        e = d(rng);
    }
    std::sort(entrants.begin(), entrants.end(),
              [&](std::size_t a, std::size_t b) { return better(pop[a], pop[b]); });
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        if (u01(rng) < cfg.tournament_probability) {
            return entrants[i];
        }
    }
    return entrants.back();
}

/// Index of the oldest member, never the island's current best.
std::size_t replacement_slot(const std::vector<Individual>& pop) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i) {
        if (better(pop[i], pop[best])) {
            best = i;
        }
    }
    std::size_t oldest = best == 0 ? 1 : 0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (i != best && pop[i].birth < pop[oldest].birth) {
            oldest = i;
        }
    }
    return oldest;
}

void step_island(Island& island, const FitnessEvaluator& evaluator, const EvolutionConfig& cfg,
                 const OperatorSet& opset, std::size_t n_vars, bool active, std::size_t iteration) {
    auto& pop = island.members;
    auto& rng = island.rng;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t step = 0; step < cfg.population_size; ++step) {
        Expression child;
        if (u01(rng) < cfg.crossover_probability) {
            const auto& a = pop[tournament(pop, cfg, rng)];
            const auto& b = pop[tournament(pop, cfg, rng)];
            child = crossover(a.expr, b.expr, opset, cfg.max_complexity, cfg.crossover_retries, rng).first;
        } else {
            child = pop[tournament(pop, cfg, rng)].expr;
        }
        if (u01(rng) < cfg.mutation_probability) {
            child = mutate(child, opset, n_vars, cfg.max_complexity, cfg.mutation, rng).expr;
        }
        child = fold_constants(child);
        auto born = make_individual(std::move(child), evaluator, active, iteration, island.next_birth++);
        pop[replacement_slot(pop)] = std::move(born);
    }
    if (cfg.optimize_probability <= 0.0) {
        return;
    }
    const RefitOptions opts{cfg.optimize_evaluations, 0};
    for (auto& ind : pop) {
        if (u01(rng) >= cfg.optimize_probability || ind.expr.constant_count() == 0 || ind.loss >= kFailureFitness) {
            continue;
        }
        auto polished = refit_constants(ind.expr, evaluator.data(), opts);
        if (polished == ind.expr) {
            continue;
        }
        const auto r = evaluator.evaluate(polished, active);
        if (!r.failed && r.fitness < ind.fitness) {
            ind.expr = std::move(polished);
            ind.fitness = r.fitness;
            ind.loss = r.loss;
        }
    }
}

class HallOfFame {
public:
    explicit HallOfFame(std::size_t max_complexity) : slots_(max_complexity + 1) {}

    void offer(const Individual& ind) {
        if (ind.loss >= kFailureFitness || ind.complexity >= slots_.size()) {
            return;
        }
        auto& slot = slots_[ind.complexity];
        if (!slot || ind.fitness < slot->fitness) {
            slot = ind;
        }
    }

    std::vector<Individual> entries() const {
        std::vector<Individual> out;
        for (const auto& s : slots_) {
            if (s) {
                out.push_back(*s);
            }
        }
        return out;
    }

    template <typename F>
    void for_each(F&& f) {
        for (auto& s : slots_) {
            if (s) {
                f(*s);
            }
        }
    }

    bool empty() const {
        return std::none_of(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); });
    }

private:
    std::vector<std::optional<Individual>> slots_;
};

void refit_hall(HallOfFame& hall, const FitnessEvaluator& evaluator, const EvolutionConfig& cfg, bool active) {
    RefitOptions opts;
    opts.max_evaluations = cfg.refit_max_evaluations;
    hall.for_each([&](Individual& ind) {
        if (ind.expr.constant_count() == 0) {
            return;
        }
        auto polished = refit_constants(ind.expr, evaluator.data(), opts);
        if (polished == ind.expr) {
            return;
        }
        const auto r = evaluator.evaluate(polished, active);
        if (!r.failed && r.fitness < ind.fitness) {
            ind.expr = std::move(polished);
            ind.fitness = r.fitness;
            ind.loss = r.loss;
        }
    });
}

}  // namespace

std::vector<Individual> init_population(const FitnessEvaluator& evaluator, const EvolutionConfig& config,
                                        const OperatorSet& opset, bool constraints_active, Rng& rng) {
    const std::size_t n_vars = evaluator.data().x.cols();
    std::uniform_int_distribution<std::size_t> depth(std::min<std::size_t>(2, config.init_max_depth),
                                                     config.init_max_depth);
    std::vector<Individual> pop;
    pop.reserve(config.population_size);
    for (std::size_t i = 0; i < config.population_size; ++i) {
        Expression e = random_expr(opset, n_vars, depth(rng), rng, config.mutation.leaves);
        while (complexity(e) > config.max_complexity) {
            e = random_expr(opset, n_vars, depth(rng), rng, config.mutation.leaves);
        }
        pop.push_back(make_individual(std::move(e), evaluator, constraints_active, 0, i));
    }
    return pop;
}

EvolutionResult evolve(const Dataset& data, const EvolutionConfig& config, const OperatorSet& opset) {
    config.validate();
    opset.validate();
    if (data.empty()) {
        throw std::invalid_argument("evolve: dataset is empty");
    }
    const FitnessEvaluator evaluator(data, config.fitness);
    const std::size_t n_vars = data.x.cols();

    std::vector<Island> islands(config.population_count);
    parallel_for(islands.size(), config.threads, [&](std::size_t i) {
        islands[i].rng = derive_rng(config.seed, i + 1);
        islands[i].members =
            init_population(evaluator, config, opset, config.fitness.constraints_active_at(0), islands[i].rng);
        islands[i].next_birth = config.population_size;
    });
    Rng master = derive_rng(config.seed, 0);

    HallOfFame hall(config.max_complexity);
    EvolutionResult result;
    bool active = config.fitness.constraints_active_at(0);
    const std::size_t migrants =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.migration_fraction *
                                                                       static_cast<double>(config.population_size))));

    for (const auto& isl : islands) {
        for (const auto& ind : isl.members) {
            hall.offer(ind);
        }
    }

    for (std::size_t it = 0; it < config.iterations; ++it) {
        const bool now_active = config.fitness.constraints_active_at(it);
        if (now_active != active) {
            active = now_active;
            for (auto& isl : islands) {
                for (auto& ind : isl.members) {
                    const auto r = evaluator.evaluate(ind.expr, active);
                    ind.fitness = r.fitness;
                    ind.loss = r.loss;
                }
            }
            hall.for_each([&](Individual& ind) {
                const auto r = evaluator.evaluate(ind.expr, active);
                ind.fitness = r.fitness;
                ind.loss = r.loss;
            });
        }

        parallel_for(islands.size(), config.threads, [&](std::size_t i) {
            step_island(islands[i], evaluator, config, opset, n_vars, active, it);
        });
        for (const auto& isl : islands) {
            for (const auto& ind : isl.members) {
                hall.offer(ind);
            }
        }

        const bool epoch = config.migration_interval > 0 && (it + 1) % config.migration_interval == 0;
        if (epoch && !hall.empty()) {
            if (config.refit_constants) {
                refit_hall(hall, evaluator, config, active);
            }
            const auto elite = hall.entries();
            std::uniform_int_distribution<std::size_t> pick_elite(0, elite.size() - 1);
            for (auto& isl : islands) {
                std::vector<std::size_t> idx(isl.members.size());
                std::iota(idx.begin(), idx.end(), 0);
                std::sort(idx.begin(), idx.end(),
                          [&](std::size_t a, std::size_t b) { return better(isl.members[b], isl.members[a]); });
                for (std::size_t m = 0; m < std::min(migrants, idx.size()); ++m) {
                    Individual copy = elite[pick_elite(master)];
                    copy.age = it;
                    copy.birth = isl.next_birth++;
                    isl.members[idx[m]] = std::move(copy);
                }
            }
        }

        if (!config.census_patterns.empty()) {
            std::vector<Expression> exprs;
            for (const auto& isl : islands) {
                for (const auto& ind : isl.members) {
                    exprs.push_back(ind.expr);
                }
            }
            result.census.push_back(count_subtrees(exprs, config.census_patterns, it));
        }

        TraceRow row;
        row.iteration = it;
        row.constraints_active = active;
        row.best_loss = kFailureFitness;
        row.best_fitness = kFailureFitness;
        hall.for_each([&](Individual& ind) {
            row.best_loss = std::min(row.best_loss, ind.loss);
            row.best_fitness = std::min(row.best_fitness, ind.fitness);
        });
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& isl : islands) {
            for (const auto& ind : isl.members) {
                total += static_cast<double>(ind.complexity);
                ++count;
            }
        }
        row.mean_complexity = total / static_cast<double>(count);
        result.trace.push_back(row);
    }

    if (config.refit_constants) {
        refit_hall(hall, evaluator, config, active);
    }
    result.hall_entries = hall.entries();
    result.hall_of_fame = pareto_front(result.hall_entries);
    return result;
}

// ---------------------------------------------------------------------------

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream out;
    out << "iteration,best_loss,best_fitness,mean_complexity,constraints_active\n";
    for (const auto& r : trace) {
        out << r.iteration << ',' << format_number(r.best_loss) << ',' << format_number(r.best_fitness) << ','
            << format_number(r.mean_complexity) << ',' << (r.constraints_active ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string census_csv(const std::vector<CensusRecord>& census, std::span<const Expression> patterns,
                       std::span<const std::string> names) {
    std::ostringstream out;
    out << "iteration,pattern,count\n";
    for (const auto& rec : census) {
        for (std::size_t p = 0; p < patterns.size(); ++p) {
            out << rec.iteration << ",\"" << format(patterns[p], names) << "\"," << rec.counts[p] << '\n';
        }
    }
    return out.str();
}

}  // namespace eqlab
