#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "eqlab/config.hpp"

using namespace eqlab;

namespace {

const std::vector<std::string> kNames = {"x", "y"};

std::vector<FieldError> errors_of(const std::function<void(JsonContext&)>& read) {
    JsonContext ctx;
    read(ctx);
    try {
        ctx.check();
    } catch (const ConfigError& e) {
        return e.errors();
    }
    return {};
}

bool has_path(const std::vector<FieldError>& errors, const std::string& path) {
    return std::any_of(errors.begin(), errors.end(), [&](const FieldError& e) { return e.path == path; });
}

bool forbids(const OperatorSet& s, UnaryOp outer, UnaryOp inner) {
    return (s.forbidden_below(outer) >> static_cast<std::size_t>(inner)) & 1u;
}

}  // namespace

TEST(Config, JoinPath) {
    EXPECT_EQ(join_path("", "a"), "a");
    EXPECT_EQ(join_path("a", "b"), "a.b");
    EXPECT_EQ(join_path("a.b", 3), "a.b[3]");
}

TEST(Config, ErrorJsonListsFields) {
    const ConfigError e(std::vector<FieldError>{{"a.b", "bad"}, {"c[0]", "worse"}});
    const Json j = e.to_json();
    EXPECT_EQ(j["error"], "validation failed");
    ASSERT_EQ(j["fields"].size(), 2u);
    EXPECT_EQ(j["fields"][0]["path"], "a.b");
    EXPECT_EQ(j["fields"][1]["message"], "worse");
}

TEST(Config, NamedOperatorSets) {
    JsonContext ctx;
    EXPECT_EQ(opset_from_json("growth", "opset", ctx).unary_ops, OperatorSet::growth().unary_ops);
    EXPECT_EQ(opset_from_json("all", "opset", ctx).unary_ops, OperatorSet::all().unary_ops);
    EXPECT_TRUE(ctx.ok());
    const auto errors = errors_of([](JsonContext& c) { opset_from_json("fancy", "opset", c); });
    EXPECT_TRUE(has_path(errors, "opset"));
}

TEST(Config, OperatorSetRoundTrip) {
    const Json in = Json::parse(R"({"binary": ["+", "mul"], "unary": ["exp", "ln"], "forbid": {"exp": ["ln"]}})");
    JsonContext ctx;
    const OperatorSet a = opset_from_json(in, "opset", ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(a.binary_ops, (std::vector<BinaryOp>{BinaryOp::add, BinaryOp::mul}));
    EXPECT_TRUE(forbids(a, UnaryOp::exp, UnaryOp::ln));
    EXPECT_TRUE(forbids(a, UnaryOp::exp, UnaryOp::exp));
    EXPECT_FALSE(forbids(a, UnaryOp::ln, UnaryOp::exp));
    const OperatorSet b = opset_from_json(opset_to_json(a), "opset", ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(opset_to_json(a), opset_to_json(b));
}

TEST(Config, OperatorSetErrorsNameElements) {
    const auto errors = errors_of([](JsonContext& c) {
        opset_from_json(Json::parse(R"({"binary": ["+", "pow"], "unary": ["exp", "zeta"], "extra": 1})"), "opset", c);
    });
    EXPECT_TRUE(has_path(errors, "opset.binary[1]"));
    EXPECT_TRUE(has_path(errors, "opset.unary[1]"));
    EXPECT_TRUE(has_path(errors, "opset.extra"));
}

TEST(Config, ConstraintAxesByNameOrIndex) {
    JsonContext ctx;
    const ConstraintSpec a = constraint_from_json(
        Json::parse(R"({"kind": "symmetry", "pairs": [["x", "y"]]})"), "c", kNames, ctx);
    const ConstraintSpec b =
        constraint_from_json(Json::parse(R"({"kind": "symmetry", "pairs": [[0, 1]]})"), "c", kNames, ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(a.pairs, b.pairs);
    EXPECT_EQ(a.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}}));
}

TEST(Config, ConstraintRoundTrip) {
    const Json in = Json::parse(R"({
        "kind": "asymptote", "axes": ["x"],
        "region": [{"axis": "x", "low": 3500, "high": null}],
        "params": {"c": 0.5, "n": 500, "rel_tol": 0.02}
    })");
    JsonContext ctx;
    const ConstraintSpec a = constraint_from_json(in, "c", kNames, ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(a.kind, ConstraintKind::asymptote);
    EXPECT_EQ(a.axis(), 0u);
    ASSERT_EQ(a.region.size(), 1u);
    EXPECT_EQ(a.region[0].low, 3500.0);
    EXPECT_TRUE(std::isinf(a.region[0].high));
    EXPECT_EQ(a.params.c, 0.5);
    const Json out = constraint_to_json(a);
    EXPECT_TRUE(out["region"][0]["high"].is_null());
    const ConstraintSpec b = constraint_from_json(out, "c", kNames, ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(constraint_to_json(b), out);
}

TEST(Config, ConstraintErrorsNameFields) {
    const auto errors = errors_of([](JsonContext& c) {
        constraint_from_json(Json::parse(R"({
            "kind": "monotonic", "axes": ["z"],
            "params": {"direction": "sideways", "tol": -1, "bogus": 2}
        })"),
                             "evolution.fitness.constraints[0]", kNames, c);
    });
    EXPECT_TRUE(has_path(errors, "evolution.fitness.constraints[0].axes[0]"));
    EXPECT_TRUE(has_path(errors, "evolution.fitness.constraints[0].params.direction"));
    EXPECT_TRUE(has_path(errors, "evolution.fitness.constraints[0].params.tol"));
    EXPECT_TRUE(has_path(errors, "evolution.fitness.constraints[0].params.bogus"));
}

TEST(Config, MissingKindIsReported) {
    const auto errors = errors_of([](JsonContext& c) { constraint_from_json(Json::object(), "k", kNames, c); });
    EXPECT_TRUE(has_path(errors, "k.kind"));
}

TEST(Config, EvolutionDefaultsAndOverrides) {
    JsonContext ctx;
    const EvolutionConfig d = evolution_from_json(Json::object(), "evolution", kNames, ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(d.population_count, EvolutionConfig{}.population_count);
    EXPECT_EQ(d.iterations, EvolutionConfig{}.iterations);
    const EvolutionConfig o = evolution_from_json(
        Json::parse(R"({"iterations": 7, "population_size": 12, "mutation": {"weights": {"insert_node": 2.5}},
                        "fitness": {"lambda": 10, "constraint_schedule": 3,
                                    "constraints": [{"kind": "sign", "params": {"sign": "nonnegative"}}]}})"),
        "evolution", kNames, ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(o.iterations, 7u);
    EXPECT_EQ(o.population_size, 12u);
    EXPECT_EQ(o.mutation.weights[static_cast<std::size_t>(MutationKind::insert_node)], 2.5);
    EXPECT_EQ(o.fitness.lambda, 10.0);
    EXPECT_EQ(o.fitness.constraint_schedule, std::optional<std::size_t>(3));
    ASSERT_EQ(o.fitness.constraints.size(), 1u);
}

TEST(Config, EvolutionRoundTrip) {
    EvolutionConfig c;
    c.iterations = 12;
    c.optimize_probability = 0.25;
    c.fitness.constraint_schedule = 4;
    c.census_patterns.push_back(parse("x * y", OperatorSet::all(), kNames));
    const Json j = evolution_to_json(c, kNames);
    JsonContext ctx;
    const EvolutionConfig back = evolution_from_json(j, "evolution", kNames, ctx);
    ASSERT_TRUE(ctx.ok());
    EXPECT_EQ(evolution_to_json(back, kNames), j);
}

TEST(Config, EvolutionErrorsAreAllReported) {
    const auto errors = errors_of([](JsonContext& c) {
        evolution_from_json(Json::parse(R"({"iterations": 0, "crossover_probability": 2, "popsize": 3,
                                             "mutation": {"weights": {"teleport": 1}},
                                             "census_patterns": ["x +"]})"),
                            "evolution", kNames, c);
    });
    EXPECT_TRUE(has_path(errors, "evolution.iterations"));
    EXPECT_TRUE(has_path(errors, "evolution.crossover_probability"));
    EXPECT_TRUE(has_path(errors, "evolution.popsize"));
    EXPECT_TRUE(has_path(errors, "evolution.mutation.weights.teleport"));
    EXPECT_TRUE(has_path(errors, "evolution.census_patterns[0]"));
    EXPECT_GE(errors.size(), 5u);
}

TEST(Config, WrongTypeIsReported) {
    const auto errors = errors_of(
        [](JsonContext& c) { evolution_from_json(Json::parse(R"({"iterations": "many"})"), "evolution", kNames, c); });
    EXPECT_TRUE(has_path(errors, "evolution.iterations"));
}

TEST(Config, BenchmarkSpecBuiltinAndCustomTargets) {
    const BenchmarkSpec spec = benchmark_spec_from_json(Json::parse(R"({
        "seed": 9, "repeats": 2, "strategies": ["qbc_ibmd", "random"], "noise_levels": [0, 0.01],
        "active": {"pool_size": 50, "max_rounds": 3},
        "evolution": {"iterations": 5},
        "targets": [
            {"name": "gravity", "variants": [
                {"name": "none"},
                {"name": "div", "constraints": [{"kind": "divergence", "axes": ["r"], "params": {"at": 0}}],
                 "constraint_schedule": 10}]},
            {"name": "line", "expression": "2 * a + 1", "domains": [{"name": "a", "low": 0, "high": 1}]}
        ]})"));
    EXPECT_EQ(spec.seed, 9u);
    EXPECT_EQ(spec.repeats, 2u);
    EXPECT_EQ(spec.strategies, (std::vector<Strategy>{Strategy::qbc_ibmd, Strategy::random}));
    EXPECT_EQ(spec.noise_levels, (std::vector<double>{0.0, 0.01}));
    EXPECT_EQ(spec.base.pool_size, 50u);
    EXPECT_EQ(spec.base.evolution.iterations, 5u);
    ASSERT_EQ(spec.cases.size(), 3u);
    EXPECT_EQ(spec.cases[1].variant, "div");
    ASSERT_EQ(spec.cases[1].constraints.size(), 1u);
    EXPECT_EQ(spec.cases[1].constraints[0].axis(), 2u);  // r is the third gravity variable
    EXPECT_EQ(spec.cases[1].constraint_schedule, std::optional<std::size_t>(10));
    EXPECT_EQ(spec.cases[2].truth.name, "line");
}

TEST(Config, BenchmarkSpecErrorsNameFields) {
    try {
        benchmark_spec_from_json(Json::parse(R"({
            "strategies": ["qbc_magic"], "noise_levels": [-1],
            "targets": [{"name": "nope"},
                        {"name": "gravity", "variants": [{"name": "v", "constraints": [{"kind": "sign", "axes": ["q"]}]}]}]
        })"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_TRUE(has_path(e.errors(), "strategies[0]"));
        EXPECT_TRUE(has_path(e.errors(), "noise_levels[0]"));
        EXPECT_TRUE(has_path(e.errors(), "targets[0].name"));
        EXPECT_TRUE(has_path(e.errors(), "targets[1].variants[0].constraints[0].axes[0]"));
    }
}

TEST(Config, BenchmarkSpecRequiresTargets) {
    try {
        benchmark_spec_from_json(Json::object());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_TRUE(has_path(e.errors(), "targets"));
    }
}
