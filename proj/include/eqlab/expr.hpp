#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "eqlab/matrix.hpp"

namespace eqlab {

using Rng = std::mt19937_64;

enum class BinaryOp : std::uint8_t { add, sub, mul, div };
enum class UnaryOp : std::uint8_t { inv, square, cube, exp, sqrt, cos, ln, sigmoid, nested_exp };

inline constexpr std::size_t kBinaryOpCount = 4;
inline constexpr std::size_t kUnaryOpCount = 9;

std::string_view op_name(BinaryOp op);
std::string_view op_symbol(BinaryOp op);
std::string_view op_name(UnaryOp op);
std::optional<UnaryOp> unary_from_name(std::string_view name);
std::optional<BinaryOp> binary_from_name(std::string_view name);

bool is_commutative(BinaryOp op);

/// Bit i set means UnaryOp(i) is present / forbidden.
using UnaryMask = std::uint16_t;

constexpr UnaryMask mask_of(UnaryOp op) { return static_cast<UnaryMask>(1u << static_cast<unsigned>(op)); }

/// Operators available to the search plus the nesting restrictions between
/// unary operators (an entry forbids the listed ops anywhere below it).
struct OperatorSet {
    std::vector<BinaryOp> binary_ops;
    std::vector<UnaryOp> unary_ops;
    std::array<UnaryMask, kUnaryOpCount> forbidden{};

    /// {+,-,*,/} with {inv, square, cube, exp, sqrt, cos}; each unary forbids itself.
    static OperatorSet defaults();
    /// Growth-curve set: {+,-,*,/} with {exp, ln, sqrt, square, cube, sigmoid, nested_exp}.
    static OperatorSet growth();
    /// Every operator, each unary forbidding itself. Used for ground-truth parsing.
    static OperatorSet all();

    bool has(UnaryOp op) const;
    bool has(BinaryOp op) const;
    void forbid(UnaryOp outer, UnaryOp inner);
    UnaryMask forbidden_below(UnaryOp op) const { return forbidden[static_cast<std::size_t>(op)]; }

    /// Throws std::invalid_argument when a nesting rule names an op outside unary_ops.
    void validate() const;
};

enum class NodeKind : std::uint8_t { constant, variable, unary, binary };

struct Node {
    NodeKind kind = NodeKind::constant;
    std::uint8_t op = 0;
    std::uint32_t var = 0;
    double value = 0.0;

    UnaryOp unary_op() const { return static_cast<UnaryOp>(op); }
    BinaryOp binary_op() const { return static_cast<BinaryOp>(op); }
    int arity() const { return kind == NodeKind::unary ? 1 : kind == NodeKind::binary ? 2 : 0; }
    bool is_leaf() const { return arity() == 0; }

    bool operator==(const Node&) const = default;
};

/// Immutable expression tree, stored as a prefix-ordered node array so any
/// subtree is the contiguous range [i, subtree_end(i)).
class Expression {
public:
    Expression();

    static Expression constant(double v);
    static Expression variable(std::size_t index);
    static Expression unary(UnaryOp op, const Expression& child);
    static Expression binary(BinaryOp op, const Expression& left, const Expression& right);
    /// Trusted construction from a prefix array; throws if the array is not one complete tree.
    static Expression from_prefix(std::vector<Node> nodes);

    std::span<const Node> nodes() const { return nodes_; }
    const Node& node(std::size_t i) const { return nodes_[i]; }
    const Node& root() const { return nodes_.front(); }
    std::size_t size() const { return nodes_.size(); }

    std::size_t subtree_end(std::size_t i) const;
    /// subtree_end for every node, computed in one pass.
    std::vector<std::size_t> subtree_ends() const;
    Expression subtree(std::size_t i) const;
    Expression replace_subtree(std::size_t i, const Expression& replacement) const;

    std::size_t depth() const;
    /// One past the largest variable index used (0 when there are no variables).
    std::size_t variable_span() const;

    std::size_t constant_count() const;
    std::vector<double> constants() const;
    Expression with_constants(std::span<const double> values) const;

    bool operator==(const Expression&) const = default;

private:
    explicit Expression(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}
    std::vector<Node> nodes_;
};

/// Tree node count.
inline std::size_t complexity(const Expression& e) { return e.size(); }

// ---------------------------------------------------------------------------
// Evaluation

/// Any intermediate whose magnitude exceeds this is treated as overflow.
inline constexpr double kOverflowBound = 1e300;

enum class DomainFailure : std::uint8_t { none, division, domain, overflow };

std::string_view failure_name(DomainFailure f);

struct EvalOutcome {
    double value = 0.0;
    DomainFailure failure = DomainFailure::none;

    bool ok() const { return failure == DomainFailure::none; }
    /// Failed outcomes compare equal by failure kind alone.
    bool operator==(const EvalOutcome& o) const {
        return failure == o.failure && (failure != DomainFailure::none || value == o.value);
    }
};

EvalOutcome eval(const Expression& expr, std::span<const double> point);

std::vector<EvalOutcome> eval_batch(const Expression& expr, const Matrix& points);

/// Column-wise evaluation into `out` (length = points.rows()). Failed rows hold
/// NaN. Returns true when every row evaluated cleanly.
bool eval_into(const Expression& expr, const Matrix& points, std::span<double> out);

double apply(UnaryOp op, double x);
double apply(BinaryOp op, double a, double b);

// ---------------------------------------------------------------------------
// Structure

bool check_nesting(const Expression& expr, const OperatorSet& opset);
/// True when every operator in expr is a member of opset.
bool uses_only(const Expression& expr, const OperatorSet& opset);

/// Collapses operator subtrees whose leaves are all constants into one constant.
/// Subtrees that fail to evaluate are left as they are.
Expression fold_constants(const Expression& expr);

/// Options for random tree growth.
struct RandomExprOptions {
    double leaf_probability = 0.3;
    double unary_probability = 0.2;
    double constant_probability = 0.3;  ///< share of leaves that are constants
    double constant_low = -2.0;
    double constant_high = 2.0;
};

/// Random tree of depth <= max_depth over n_vars variables respecting the nesting rules.
Expression random_expr(const OperatorSet& opset, std::size_t n_vars, std::size_t max_depth, Rng& rng,
                       const RandomExprOptions& options = {});

/// Random leaf (variable or constant).
Expression random_leaf(std::size_t n_vars, Rng& rng, const RandomExprOptions& options = {});

// ---------------------------------------------------------------------------
// Text form

std::string format_number(double v);
std::string format(const Expression& expr, std::span<const std::string> names = {});

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Parses the canonical infix grammar (see docs/grammar.md). Variables are
/// x<N> or one of `names` (bound to its position). Throws ParseError.
Expression parse(std::string_view text, const OperatorSet& opset, std::span<const std::string> names = {});

}  // namespace eqlab
