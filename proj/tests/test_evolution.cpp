#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "eqlab/evolution.hpp"
#include "oracles.hpp"

using namespace eqlab;

namespace {

Expression P(std::string_view s) { return parse(s, OperatorSet::all()); }

Dataset line_data(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-3, 3);
    Dataset d;
    d.x = Matrix(n, 1);
    d.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        d.x(r, 0) = u(rng);
        d.y[r] = d.x(r, 0);
    }
    return d;
}

EvolutionConfig small_config(std::uint64_t seed) {
    EvolutionConfig cfg;
    cfg.population_count = 4;
    cfg.population_size = 20;
    cfg.iterations = 30;
    cfg.seed = seed;
    return cfg;
}

std::multiset<std::string> node_labels(const Expression& e, std::size_t begin, std::size_t end) {
    std::multiset<std::string> out;
    for (std::size_t i = begin; i < end; ++i) {
        const Node& n = e.node(i);
        out.insert(std::to_string(static_cast<int>(n.kind)) + ":" + std::to_string(n.op) + ":" +
                   std::to_string(n.var) + ":" + format_number(n.value));
    }
    return out;
}

}  // namespace

TEST(Mutation, KindPreservation) {
    Rng rng(1);
    MutationConfig cfg;
    const auto ops = OperatorSet::defaults();
    for (int i = 0; i < 200; ++i) {
        const auto c = apply_mutation(Expression::constant(1.0), MutationKind::perturb_constant, ops, 2, cfg, rng);
        ASSERT_TRUE(c.has_value());
        EXPECT_EQ(c->root().kind, NodeKind::constant);
        const auto b = apply_mutation(P("x0 + x1"), MutationKind::replace_operator, ops, 2, cfg, rng);
        ASSERT_TRUE(b.has_value());
        EXPECT_EQ(b->root().arity(), 2);
        EXPECT_NE(b->root().binary_op(), BinaryOp::add);
        const auto u = apply_mutation(P("cos(x0)"), MutationKind::replace_operator, ops, 1, cfg, rng);
        EXPECT_EQ(u->root().arity(), 1);
    }
    EXPECT_FALSE(apply_mutation(P("x0"), MutationKind::perturb_constant, ops, 1, cfg, rng).has_value());
    EXPECT_FALSE(apply_mutation(P("x0"), MutationKind::delete_subtree, ops, 1, cfg, rng).has_value());
}

TEST(Mutation, InsertAndDeleteChangeSize) {
    Rng rng(2);
    MutationConfig cfg;
    const auto ops = OperatorSet::defaults();
    const auto e = P("(x0 + 1) * x1");
    for (int i = 0; i < 100; ++i) {
        const auto grown = apply_mutation(e, MutationKind::insert_node, ops, 2, cfg, rng);
        EXPECT_TRUE(grown->size() == e.size() + 1 || grown->size() == e.size() + 2);
        const auto shrunk = apply_mutation(e, MutationKind::delete_subtree, ops, 2, cfg, rng);
        EXPECT_LT(shrunk->size(), e.size());
    }
}

TEST(Mutation, OutputsAlwaysValid) {
    Rng rng(3);
    MutationConfig cfg;
    const auto ops = OperatorSet::defaults();
    auto e = P("cos(x0 * exp(x1))");
    for (int i = 0; i < 20000; ++i) {
        const auto r = mutate(e, ops, 2, 12, cfg, rng);
        ASSERT_TRUE(check_nesting(r.expr, ops)) << format(r.expr);
        ASSERT_LE(complexity(r.expr), 12u);
        if (i % 50 == 0) {
            do {
                e = random_expr(ops, 2, 4, rng);
            } while (complexity(e) > 12);
        } else {
            e = r.expr;
        }
    }
}

TEST(Mutation, KindDistributionMatchesWeights) {
    MutationConfig cfg;
    cfg.weights = {0.1, 0.2, 0.3, 0.25, 0.15};
    Rng rng(4);
    std::array<double, kMutationKindCount> counts{};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(choose_mutation_kind(cfg, rng))] += 1;
    double chi2 = 0.0;
    for (std::size_t k = 0; k < kMutationKindCount; ++k) {
        const double expected = cfg.weights[k] * draws;
        chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
        EXPECT_NEAR(counts[k] / draws, cfg.weights[k], 0.02);
    }
    // 4 degrees of freedom, 99.9th percentile.
    EXPECT_LT(chi2, 18.47);
}

TEST(Crossover, RootSwapAndBookkeeping) {
    Rng rng(5);
    const auto ops = OperatorSet::defaults();
    for (int i = 0; i < 10000; ++i) {
        const auto a = random_expr(ops, 3, 4, rng);
        const auto b = random_expr(ops, 3, 4, rng);
        Rng probe = rng;
        const auto [ca, cb] = crossover(a, b, ops, 40, 5, rng);
        ASSERT_TRUE(check_nesting(ca, ops));
        ASSERT_TRUE(check_nesting(cb, ops));
        // Total node multiset is conserved whenever a swap happened.
        auto before = node_labels(a, 0, a.size());
        auto bl = node_labels(b, 0, b.size());
        before.insert(bl.begin(), bl.end());
        auto after = node_labels(ca, 0, ca.size());
        auto al = node_labels(cb, 0, cb.size());
        after.insert(al.begin(), al.end());
        ASSERT_EQ(before, after);
        (void)probe;
    }
    // Whole-tree swap.
    const auto a = P("x0 + 1");
    const auto b = P("cos(x1)");
    EXPECT_EQ(a.replace_subtree(0, b.subtree(0)), b);
    EXPECT_EQ(b.replace_subtree(0, a.subtree(0)), a);
}

TEST(Crossover, RejectsOversizedChildren) {
    Rng rng(6);
    const auto ops = OperatorSet::defaults();
    const auto a = P("((x0 + x1) * (x0 - x1)) / (x0 + 2)");
    const auto b = P("x0");
    for (int i = 0; i < 200; ++i) {
        const auto [ca, cb] = crossover(a, b, ops, a.size(), 3, rng);
        EXPECT_LE(ca.size(), a.size());
        EXPECT_LE(cb.size(), a.size());
    }
}

TEST(Refit, LinearCoefficient) {
    const auto data = [] {
        Dataset d;
        d.x = Matrix(20, 1);
        for (std::size_t r = 0; r < 20; ++r) {
            d.x(r, 0) = 0.1 * static_cast<double>(r) - 1.0;
            d.y.push_back(2.0 * d.x(r, 0));
        }
        return d;
    }();
    const auto fit = refit_constants(P("0.7 * x0"), data);
    EXPECT_NEAR(fit.constants()[0], 2.0, 1e-6);
    EXPECT_EQ(refit_constants(P("x0 * x0"), data), P("x0 * x0"));
}

TEST(Refit, TwoParameterExponential) {
    Dataset d;
    d.x = Matrix(30, 1);
    for (std::size_t r = 0; r < 30; ++r) {
        d.x(r, 0) = 0.1 * static_cast<double>(r);
        d.y.push_back(1.5 * std::exp(-0.8 * d.x(r, 0)));
    }
    const auto fit = refit_constants(P("1 * exp(-0.3 * x0)"), d, {4000, 3});
    EXPECT_NEAR(fit.constants()[0], 1.5, 1e-5);
    EXPECT_NEAR(fit.constants()[1], -0.8, 1e-5);
}

TEST(Census, Counts) {
    EXPECT_EQ(count_matches(P("x0 + x0"), P("x0")), 2u);
    EXPECT_EQ(count_matches(P("square(x2 - x1) + square(x4 - x3)"), P("x2 - x1")), 1u);
    EXPECT_EQ(count_matches(P("square(x1 - x2)"), P("x2 - x1")), 0u);
    EXPECT_EQ(count_matches(P("x1 * x0 + x0 * x1"), P("x0 * x1")), 2u);
    const std::vector<Expression> pop = {P("x0 + x0"), P("x0")};
    const std::vector<Expression> pats = {P("x0"), P("x1")};
    const auto rec = count_subtrees(pop, pats, 7);
    EXPECT_EQ(rec.iteration, 7u);
    EXPECT_EQ(rec.counts, (std::vector<std::size_t>{3, 0}));
}

TEST(Census, MatchesBruteForceEnumerator) {
    Rng rng(7);
    const auto ops = OperatorSet::defaults();
    RandomExprOptions opts;
    opts.constant_probability = 0.0;  // variable-only leaves make repeats common
    for (int i = 0; i < 1000; ++i) {
        const auto e = random_expr(ops, 2, 6, rng, opts);
        const auto pat = random_expr(ops, 2, 2 + i % 2, rng, opts);
        EXPECT_EQ(count_matches(e, pat), oracle::brute_count(e, pat)) << format(e) << " / " << format(pat);
        // Every subtree of e matches itself at least once.
        const std::size_t k = static_cast<std::size_t>(i) % e.size();
        EXPECT_GE(count_matches(e, e.subtree(k)), 1u);
    }
}

TEST(Population, InitValidAndDeterministic) {
    const auto data = line_data(10, 1);
    FitnessEvaluator ev(data, FitnessConfig{});
    auto cfg = small_config(1);
    cfg.population_size = 10;
    Rng a(3);
    Rng b(3);
    const auto pa = init_population(ev, cfg, OperatorSet::defaults(), false, a);
    const auto pb = init_population(ev, cfg, OperatorSet::defaults(), false, b);
    ASSERT_EQ(pa.size(), 10u);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_TRUE(check_nesting(pa[i].expr, OperatorSet::defaults()));
        EXPECT_EQ(pa[i].complexity, complexity(pa[i].expr));
        EXPECT_EQ(pa[i].expr, pb[i].expr);
        EXPECT_EQ(pa[i].fitness, ev.evaluate(pa[i].expr, false).fitness);
    }
}

TEST(Evolve, LearnsIdentity) {
    int solved = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto cfg = small_config(seed);
        const auto res = evolve(line_data(20, seed), cfg, OperatorSet::defaults());
        if (res.hall_of_fame.best().loss < 1e-10) ++solved;
    }
    EXPECT_GE(solved, 9);
}

TEST(Evolve, SeededDeterminismAndThreadIndependence) {
    const auto data = line_data(20, 3);
    auto cfg = small_config(42);
    cfg.census_patterns = {P("x0 * x0")};
    const auto a = evolve(data, cfg, OperatorSet::defaults());
    const auto b = evolve(data, cfg, OperatorSet::defaults());
    cfg.threads = 3;
    const auto c = evolve(data, cfg, OperatorSet::defaults());
    EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace));
    EXPECT_EQ(a.hall_of_fame, b.hall_of_fame);
    EXPECT_EQ(trace_csv(a.trace), trace_csv(c.trace));
    EXPECT_EQ(a.hall_of_fame, c.hall_of_fame);
    EXPECT_EQ(census_csv(a.census, cfg.census_patterns), census_csv(c.census, cfg.census_patterns));
    EXPECT_EQ(a.census.size(), cfg.iterations);
}

TEST(Evolve, ZeroScheduleEqualsUnconstrained) {
    Dataset d;
    d.x = Matrix(15, 2);
    Rng rng(9);
    std::uniform_real_distribution<double> u(1, 3);
    for (std::size_t r = 0; r < 15; ++r) {
        d.x(r, 0) = u(rng);
        d.x(r, 1) = u(rng);
        d.y.push_back(d.x(r, 0) / (d.x(r, 1) * d.x(r, 1)));
    }
    auto plain = small_config(5);
    auto sched = plain;
    ConstraintSpec div;
    div.kind = ConstraintKind::divergence;
    div.axes = {1};
    sched.fitness.constraints = {div};
    sched.fitness.constraint_schedule = 0;
    const auto a = evolve(d, plain, OperatorSet::defaults());
    const auto b = evolve(d, sched, OperatorSet::defaults());
    EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace));
    EXPECT_EQ(a.hall_of_fame, b.hall_of_fame);
}

TEST(Evolve, ElitismPerPhaseAndFrontShape) {
    Dataset d;
    d.x = Matrix(25, 2);
    Rng rng(10);
    std::uniform_real_distribution<double> u(1, 3);
    for (std::size_t r = 0; r < 25; ++r) {
        d.x(r, 0) = u(rng);
        d.x(r, 1) = u(rng);
        d.y.push_back(d.x(r, 0) * d.x(r, 1) + std::cos(d.x(r, 0)));
    }
    auto cfg = small_config(11);
    cfg.iterations = 25;
    ConstraintSpec sym;
    sym.kind = ConstraintKind::symmetry;
    sym.pairs = {{0, 1}};
    cfg.fitness.constraints = {sym};
    cfg.fitness.constraint_schedule = 10;
    const auto res = evolve(d, cfg, OperatorSet::defaults());
    ASSERT_EQ(res.trace.size(), 25u);
    for (std::size_t i = 1; i < res.trace.size(); ++i) {
        if (res.trace[i].constraints_active == res.trace[i - 1].constraints_active) {
            EXPECT_LE(res.trace[i].best_fitness, res.trace[i - 1].best_fitness) << "iteration " << i;
        }
    }
    EXPECT_TRUE(res.trace[9].constraints_active);
    EXPECT_FALSE(res.trace[10].constraints_active);
    const auto& f = res.hall_of_fame.entries;
    ASSERT_FALSE(f.empty());
    for (std::size_t i = 1; i < f.size(); ++i) {
        EXPECT_LT(f[i - 1].complexity, f[i].complexity);
        EXPECT_GT(f[i - 1].loss, f[i].loss);
    }
    for (const auto& e : f) {
        EXPECT_TRUE(check_nesting(e.expr, OperatorSet::defaults()));
        EXPECT_LE(e.complexity, cfg.max_complexity);
    }
}

TEST(Evolve, ConfigValidation) {
    auto cfg = small_config(0);
    cfg.crossover_probability = 1.5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = small_config(0);
    cfg.population_size = 1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = small_config(0);
    cfg.fitness.lambda = -1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_THROW(evolve(Dataset{}, small_config(0), OperatorSet::defaults()), std::invalid_argument);
}

TEST(Csv, Formats) {
    std::vector<TraceRow> t = {{0, 0.5, 0.6, 3.25, true}};
    EXPECT_EQ(trace_csv(t), "iteration,best_loss,best_fitness,mean_complexity,constraints_active\n0,0.5,0.6,3.25,1\n");
    const std::vector<Expression> pats = {P("x1 - x0")};
    std::vector<CensusRecord> c = {{0, {4}}};
    EXPECT_EQ(census_csv(c, pats), "iteration,pattern,count\n0,\"(x1 - x0)\",4\n");
}
