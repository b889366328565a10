#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eqlab/expr.hpp"
#include "oracles.hpp"

using namespace eqlab;

namespace {

Expression P(std::string_view s, const OperatorSet& ops = OperatorSet::all()) { return parse(s, ops); }

std::vector<double> random_point(std::size_t n, Rng& rng, double lo = -3.0, double hi = 3.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> p(n);
    for (auto& v : p) v = u(rng);
    return p;
}

}  // namespace

TEST(Eval, AdditionAndDomainFailure) {
    const std::vector<double> p = {2.0, 3.0};
    EXPECT_EQ(eval(P("x0 + x1"), p).value, 5.0);
    EXPECT_TRUE(eval(P("x0 + x1"), p).ok());

    const auto bad = eval(P("sqrt(x0)"), std::vector<double>{-1.0});
    EXPECT_FALSE(bad.ok());
    EXPECT_EQ(bad.failure, DomainFailure::domain);
    EXPECT_EQ(eval(P("x0 / x1"), std::vector<double>{1.0, 0.0}).failure, DomainFailure::division);
    EXPECT_EQ(eval(P("inv(x0)"), std::vector<double>{0.0}).failure, DomainFailure::division);
    EXPECT_EQ(eval(P("ln(x0)"), std::vector<double>{0.0}).failure, DomainFailure::domain);
    EXPECT_EQ(eval(P("exp(x0)"), std::vector<double>{800.0}).failure, DomainFailure::overflow);
    EXPECT_EQ(eval(P("x0 * x0"), std::vector<double>{1e200}).failure, DomainFailure::overflow);
}

TEST(Eval, GravityMatchesArbitraryPrecision) {
    const std::vector<std::string> names = {"G", "m1", "m2", "r"};
    const auto e = parse("G * m1 * m2 / square(r)", OperatorSet::defaults(), names);
    Rng rng(7);
    std::uniform_real_distribution<double> u(1.0, 5.0);
    for (int i = 0; i < 500; ++i) {
        const std::vector<double> p = {1.0, u(rng), u(rng), u(rng)};
        const auto got = eval(e, p);
        const auto want = oracle::eval_big(e, p);
        ASSERT_TRUE(got.ok());
        ASSERT_TRUE(want.has_value());
        EXPECT_LE(std::fabs(got.value - *want), 1e-12 * std::fabs(*want));
    }
}

TEST(Eval, RandomTreesAgreeWithArbitraryPrecision) {
    Rng rng(11);
    const auto ops = OperatorSet::defaults();
    int compared = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto e = random_expr(ops, 3, 4, rng);
        const auto p = random_point(3, rng, 0.5, 2.0);
        const auto got = eval(e, p);
        const auto want = oracle::eval_big(e, p);
        if (!got.ok() || !want) continue;
        ++compared;
        // Catastrophic cancellation can amplify double rounding, so the bound is loose.
        EXPECT_NEAR(got.value, *want, 1e-9 * std::max(1.0, std::fabs(*want))) << format(e);
    }
    EXPECT_GT(compared, 1500);
}

TEST(Eval, NoNonFiniteLeakage) {
    Rng rng(3);
    const auto ops = OperatorSet::all();
    for (int i = 0; i < 5000; ++i) {
        const auto e = random_expr(ops, 2, 5, rng);
        const auto p = random_point(2, rng, -20.0, 20.0);
        oracle::Instrumented inst{e};
        inst.next(p);
        const auto got = eval(e, p);
        EXPECT_EQ(got.ok(), !inst.bad) << format(e);
        if (got.ok()) {
            EXPECT_TRUE(std::isfinite(got.value));
        }
        EXPECT_EQ(got, eval(e, p));  // purity
    }
}

TEST(EvalBatch, MatchesRowLoop) {
    Rng rng(5);
    const auto ops = OperatorSet::all();
    Matrix m(1000, 3);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < 3; ++c) m(r, c) = u(rng);
    for (int k = 0; k < 50; ++k) {
        const auto e = random_expr(ops, 3, 5, rng);
        const auto batch = eval_batch(e, m);
        ASSERT_EQ(batch.size(), m.rows());
        std::vector<double> fast(m.rows());
        eval_into(e, m, fast);
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const auto one = eval(e, m.row(r));
            EXPECT_EQ(batch[r], one);
            if (one.ok()) {
                EXPECT_EQ(fast[r], one.value);
            } else {
                EXPECT_TRUE(std::isnan(fast[r]));
            }
        }
    }
    EXPECT_TRUE(eval_batch(P("x0"), Matrix(0, 1)).empty());
    Matrix single(1, 2);
    single(0, 0) = 2;
    single(0, 1) = 3;
    EXPECT_EQ(eval_batch(P("x0 * x1"), single).front(), eval(P("x0 * x1"), std::vector<double>{2, 3}));
}

TEST(Complexity, NodeCount) {
    EXPECT_EQ(complexity(Expression::constant(3.1)), 1u);
    EXPECT_EQ(complexity(P("x0 + x1")), 3u);
}

TEST(Complexity, AdditiveOverSubtrees) {
    Rng rng(9);
    const auto ops = OperatorSet::defaults();
    for (int i = 0; i < 500; ++i) {
        const auto l = random_expr(ops, 2, 4, rng);
        const auto r = random_expr(ops, 2, 4, rng);
        EXPECT_EQ(complexity(Expression::binary(BinaryOp::sub, l, r)), 1 + complexity(l) + complexity(r));
        EXPECT_EQ(complexity(Expression::unary(UnaryOp::exp, l)), 1 + complexity(l));
    }
}

TEST(RandomExpr, DepthOneIsLeaf) {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        EXPECT_TRUE(random_expr(OperatorSet::defaults(), 3, 1, rng).root().is_leaf());
    }
}

TEST(RandomExpr, RespectsNestingAndDepth) {
    Rng rng(2);
    const auto ops = OperatorSet::defaults();
    for (int i = 0; i < 10000; ++i) {
        const auto e = random_expr(ops, 3, 6, rng);
        ASSERT_LE(e.depth(), 6u);
        // Independent check: walk every unary node and scan its subtree.
        for (std::size_t k = 0; k < e.size(); ++k) {
            if (e.node(k).kind != NodeKind::unary) continue;
            const auto outer = e.node(k).unary_op();
            const std::size_t end = e.subtree_end(k);
            for (std::size_t j = k + 1; j < end; ++j) {
                if (e.node(j).kind == NodeKind::unary) {
                    ASSERT_NE(e.node(j).unary_op(), outer) << format(e);
                }
            }
        }
    }
}

TEST(RandomExpr, SeedDeterminism) {
    Rng a(123);
    Rng b(123);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(random_expr(OperatorSet::defaults(), 2, 5, a), random_expr(OperatorSet::defaults(), 2, 5, b));
    }
}

TEST(Format, CanonicalStrings) {
    const std::vector<std::string> names = {"c"};
    const auto e = Expression::binary(BinaryOp::mul, Expression::variable(0), Expression::constant(0.005238));
    EXPECT_EQ(format(e), "(x0 * 0.005238)");
    EXPECT_EQ(format(e, names), "(c * 0.005238)");
    EXPECT_EQ(complexity(parse("(c * 0.005238)", OperatorSet::defaults(), names)), 3u);
    EXPECT_EQ(format(P("cos(x0) + -2.5")), "(cos(x0) + -2.5)");
    EXPECT_EQ(format(P("-x1")), "(-1 * x1)");
    EXPECT_EQ(format(P("1e-20 * x0")), "(1e-20 * x0)");
}

TEST(Format, ParseRoundTrip) {
    Rng rng(21);
    const auto ops = OperatorSet::all();
    for (int i = 0; i < 1000; ++i) {
        const auto e = random_expr(ops, 3, 5, rng);
        const auto back = parse(format(e), ops);
        EXPECT_EQ(back, e) << format(e);
        for (int k = 0; k < 100; ++k) {
            const auto p = random_point(3, rng);
            EXPECT_EQ(eval(back, p), eval(e, p));
        }
    }
}

TEST(Parse, Errors) {
    try {
        P("(((");
        FAIL() << "expected ParseError";
    } catch (const ParseError& err) {
        EXPECT_EQ(err.offset(), 3u);
    }
    EXPECT_THROW(P("x0 +"), ParseError);
    EXPECT_THROW(P("foo(x0)"), ParseError);
    EXPECT_THROW(P("x0 x1"), ParseError);
    EXPECT_THROW(P("y"), ParseError);
    EXPECT_THROW(parse("ln(x0)", OperatorSet::defaults()), ParseError);
    try {
        P("x0 + )");
        FAIL();
    } catch (const ParseError& err) {
        EXPECT_EQ(err.offset(), 5u);
    }
}

TEST(Nesting, Rules) {
    const auto ops = OperatorSet::defaults();
    EXPECT_FALSE(check_nesting(P("cos(cos(x0))"), ops));
    EXPECT_FALSE(check_nesting(P("cos(x0 + 2 * cos(x1))"), ops));
    EXPECT_TRUE(check_nesting(P("cos(x0) + cos(x1)"), ops));
    EXPECT_TRUE(check_nesting(P("exp(cos(x0))"), ops));
    EXPECT_TRUE(check_nesting(P("cos(exp(x0))"), ops));

    auto custom = ops;
    custom.forbid(UnaryOp::exp, UnaryOp::cos);
    EXPECT_FALSE(check_nesting(P("exp(cos(x0))"), custom));
    EXPECT_TRUE(check_nesting(P("cos(exp(x0))"), custom));
}

TEST(OperatorSetTest, Defaults) {
    const auto ops = OperatorSet::defaults();
    EXPECT_EQ(ops.binary_ops.size(), 4u);
    EXPECT_EQ(ops.unary_ops.size(), 6u);
    for (auto op : ops.unary_ops) {
        EXPECT_TRUE(ops.forbidden_below(op) & mask_of(op));
    }
    EXPECT_FALSE(ops.has(UnaryOp::ln));
    EXPECT_TRUE(OperatorSet::growth().has(UnaryOp::nested_exp));
    auto broken = ops;
    broken.forbidden[static_cast<std::size_t>(UnaryOp::ln)] = mask_of(UnaryOp::ln);
    EXPECT_THROW(broken.validate(), std::invalid_argument);
}

TEST(Structure, SubtreeReplaceAndConstants) {
    const auto e = P("(x0 + 2) * cos(x1)");
    EXPECT_EQ(format(e.subtree(1)), "(x0 + 2)");
    EXPECT_EQ(format(e.replace_subtree(1, P("x2"))), "(x2 * cos(x1))");
    EXPECT_EQ(e.constant_count(), 1u);
    const std::vector<double> c = {5.0};
    EXPECT_EQ(format(e.with_constants(c)), "((x0 + 5) * cos(x1))");
    EXPECT_EQ(e.variable_span(), 2u);
    EXPECT_EQ(format(fold_constants(P("x0 * (2 + 3)"))), "(x0 * 5)");
    EXPECT_EQ(format(fold_constants(P("x0 * (1 / 0)"))), "(x0 * (1 / 0))");
}

TEST(Apply, Operators) {
    EXPECT_NEAR(apply(UnaryOp::sigmoid, 0.0), 0.5, 1e-15);
    EXPECT_NEAR(apply(UnaryOp::sigmoid, -800.0), 0.0, 1e-300);
    EXPECT_NEAR(apply(UnaryOp::nested_exp, 0.0), std::exp(1.0), 1e-15);
    EXPECT_EQ(apply(UnaryOp::cube, -2.0), -8.0);
}
