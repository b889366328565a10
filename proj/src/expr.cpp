#include "eqlab/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

namespace eqlab {

namespace {

constexpr std::array<std::string_view, kBinaryOpCount> kBinaryNames = {"add", "sub", "mul", "div"};
constexpr std::array<std::string_view, kBinaryOpCount> kBinarySymbols = {"+", "-", "*", "/"};
constexpr std::array<std::string_view, kUnaryOpCount> kUnaryNames = {
    "inv", "square", "cube", "exp", "sqrt", "cos", "ln", "sigmoid", "nested_exp"};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double sanitize(double v) { return std::fabs(v) <= kOverflowBound ? v : kNaN; }

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::string_view op_name(BinaryOp op) { return kBinaryNames[static_cast<std::size_t>(op)]; }
std::string_view op_symbol(BinaryOp op) { return kBinarySymbols[static_cast<std::size_t>(op)]; }
std::string_view op_name(UnaryOp op) { return kUnaryNames[static_cast<std::size_t>(op)]; }

std::optional<UnaryOp> unary_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kUnaryOpCount; ++i) {
        if (kUnaryNames[i] == name) {
            return static_cast<UnaryOp>(i);
        }
    }
    if (name == "log") {
        return UnaryOp::ln;
    }
    return std::nullopt;
}

std::optional<BinaryOp> binary_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kBinaryOpCount; ++i) {
        if (kBinaryNames[i] == name || kBinarySymbols[i] == name) {
            return static_cast<BinaryOp>(i);
        }
    }
    return std::nullopt;
}

bool is_commutative(BinaryOp op) { return op == BinaryOp::add || op == BinaryOp::mul; }

// ---------------------------------------------------------------------------
// OperatorSet

namespace {

OperatorSet make_set(std::vector<UnaryOp> unary) {
    OperatorSet s;
    s.binary_ops = {BinaryOp::add, BinaryOp::sub, BinaryOp::mul, BinaryOp::div};
    s.unary_ops = std::move(unary);
    for (UnaryOp op : s.unary_ops) {
        s.forbid(op, op);
    }
    return s;
}

}  // namespace

OperatorSet OperatorSet::defaults() {
    return make_set({UnaryOp::inv, UnaryOp::square, UnaryOp::cube, UnaryOp::exp, UnaryOp::sqrt, UnaryOp::cos});
}

OperatorSet OperatorSet::growth() {
    return make_set({UnaryOp::exp, UnaryOp::ln, UnaryOp::sqrt, UnaryOp::square, UnaryOp::cube, UnaryOp::sigmoid,
                     UnaryOp::nested_exp});
}

OperatorSet OperatorSet::all() {
    std::vector<UnaryOp> ops;
    for (std::size_t i = 0; i < kUnaryOpCount; ++i) {
        ops.push_back(static_cast<UnaryOp>(i));
    }
    return make_set(std::move(ops));
}

bool OperatorSet::has(UnaryOp op) const {
    return std::find(unary_ops.begin(), unary_ops.end(), op) != unary_ops.end();
}

bool OperatorSet::has(BinaryOp op) const {
    return std::find(binary_ops.begin(), binary_ops.end(), op) != binary_ops.end();
}

void OperatorSet::forbid(UnaryOp outer, UnaryOp inner) {
    forbidden[static_cast<std::size_t>(outer)] |= mask_of(inner);
}

void OperatorSet::validate() const {
    for (std::size_t i = 0; i < kUnaryOpCount; ++i) {
        if (forbidden[i] != 0 && !has(static_cast<UnaryOp>(i))) {
            throw std::invalid_argument("nesting rule for '" + std::string(kUnaryNames[i]) +
                                        "' but the operator is not in the set");
        }
    }
    if (binary_ops.empty() && unary_ops.empty()) {
        throw std::invalid_argument("operator set is empty");
    }
}

// ---------------------------------------------------------------------------
// Expression

Expression::Expression() : nodes_{Node{NodeKind::constant, 0, 0, 0.0}} {}

Expression Expression::constant(double v) { return Expression({Node{NodeKind::constant, 0, 0, v}}); }

Expression Expression::variable(std::size_t index) {
    return Expression({Node{NodeKind::variable, 0, static_cast<std::uint32_t>(index), 0.0}});
}

Expression Expression::unary(UnaryOp op, const Expression& child) {
    std::vector<Node> nodes;
    nodes.reserve(child.size() + 1);
    nodes.push_back(Node{NodeKind::unary, static_cast<std::uint8_t>(op), 0, 0.0});
    nodes.insert(nodes.end(), child.nodes_.begin(), child.nodes_.end());
    return Expression(std::move(nodes));
}

Expression Expression::binary(BinaryOp op, const Expression& left, const Expression& right) {
    std::vector<Node> nodes;
    nodes.reserve(left.size() + right.size() + 1);
    nodes.push_back(Node{NodeKind::binary, static_cast<std::uint8_t>(op), 0, 0.0});
    nodes.insert(nodes.end(), left.nodes_.begin(), left.nodes_.end());
    nodes.insert(nodes.end(), right.nodes_.begin(), right.nodes_.end());
    return Expression(std::move(nodes));
}

Expression Expression::from_prefix(std::vector<Node> nodes) {
    std::size_t need = 1;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (need == 0) {
            throw std::invalid_argument("prefix array holds more than one tree");
        }
        need = need - 1 + static_cast<std::size_t>(nodes[i].arity());
    }
    if (need != 0 || nodes.empty()) {
        throw std::invalid_argument("prefix array is not a complete tree");
    }
    return Expression(std::move(nodes));
}

std::size_t Expression::subtree_end(std::size_t i) const {
    std::size_t need = 1;
    while (need > 0) {
        need = need - 1 + static_cast<std::size_t>(nodes_[i].arity());
        ++i;
    }
    return i;
}

std::vector<std::size_t> Expression::subtree_ends() const {
    const std::size_t n = nodes_.size();
    std::vector<std::size_t> end(n);
    for (std::size_t k = n; k-- > 0;) {
        switch (nodes_[k].arity()) {
            case 0: end[k] = k + 1; break;
            case 1: end[k] = end[k + 1]; break;
            default: end[k] = end[end[k + 1]]; break;
        }
    }
    return end;
}

Expression Expression::subtree(std::size_t i) const {
    const auto e = subtree_end(i);
    return Expression(std::vector<Node>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                        nodes_.begin() + static_cast<std::ptrdiff_t>(e)));
}

Expression Expression::replace_subtree(std::size_t i, const Expression& replacement) const {
    const auto e = subtree_end(i);
    std::vector<Node> nodes;
    nodes.reserve(nodes_.size() - (e - i) + replacement.size());
    nodes.insert(nodes.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(i));
    nodes.insert(nodes.end(), replacement.nodes_.begin(), replacement.nodes_.end());
    nodes.insert(nodes.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(e), nodes_.end());
    return Expression(std::move(nodes));
}

std::size_t Expression::depth() const {
    const std::size_t n = nodes_.size();
    const auto end = subtree_ends();
    std::vector<std::size_t> d(n);
    for (std::size_t k = n; k-- > 0;) {
        switch (nodes_[k].arity()) {
            case 0: d[k] = 1; break;
            case 1: d[k] = 1 + d[k + 1]; break;
            default: d[k] = 1 + std::max(d[k + 1], d[end[k + 1]]); break;
        }
    }
    return d[0];
}

std::size_t Expression::variable_span() const {
    std::size_t span = 0;
    for (const auto& n : nodes_) {
        if (n.kind == NodeKind::variable) {
            span = std::max<std::size_t>(span, n.var + 1);
        }
    }
    return span;
}

std::size_t Expression::constant_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.kind == NodeKind::constant; }));
}

std::vector<double> Expression::constants() const {
    std::vector<double> out;
    for (const auto& n : nodes_) {
        if (n.kind == NodeKind::constant) {
            out.push_back(n.value);
        }
    }
    return out;
}

Expression Expression::with_constants(std::span<const double> values) const {
    auto nodes = nodes_;
    std::size_t k = 0;
    for (auto& n : nodes) {
        if (n.kind == NodeKind::constant) {
            if (k >= values.size()) {
                throw std::invalid_argument("with_constants: too few values");
            }
            n.value = values[k++];
        }
    }
    if (k != values.size()) {
        throw std::invalid_argument("with_constants: too many values");
    }
    return Expression(std::move(nodes));
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view failure_name(DomainFailure f) {
    switch (f) {
        case DomainFailure::none: return "none";
        case DomainFailure::division: return "division";
        case DomainFailure::domain: return "domain";
        case DomainFailure::overflow: return "overflow";
    }
    return "?";
}

double apply(UnaryOp op, double x) {
    switch (op) {
        case UnaryOp::inv: return 1.0 / x;
        case UnaryOp::square: return x * x;
        case UnaryOp::cube: return x * x * x;
        case UnaryOp::exp: return std::exp(x);
        case UnaryOp::sqrt: return std::sqrt(x);
        case UnaryOp::cos: return std::cos(x);
        case UnaryOp::ln: return std::log(x);
        case UnaryOp::sigmoid: return sigmoid(x);
        case UnaryOp::nested_exp: return std::exp(std::exp(x));
    }
    return kNaN;
}

double apply(BinaryOp op, double a, double b) {
    switch (op) {
        case BinaryOp::add: return a + b;
        case BinaryOp::sub: return a - b;
        case BinaryOp::mul: return a * b;
        case BinaryOp::div: return a / b;
    }
    return kNaN;
}

namespace {

EvalOutcome classify_unary(UnaryOp op, double x) {
    if (op == UnaryOp::inv && x == 0.0) {
        return {kNaN, DomainFailure::division};
    }
    if ((op == UnaryOp::sqrt && x < 0.0) || (op == UnaryOp::ln && x <= 0.0)) {
        return {kNaN, DomainFailure::domain};
    }
    if (op == UnaryOp::nested_exp && !(std::fabs(std::exp(x)) <= kOverflowBound)) {
        return {kNaN, DomainFailure::overflow};
    }
    const double v = apply(op, x);
    if (!(std::fabs(v) <= kOverflowBound)) {
        return {kNaN, DomainFailure::overflow};
    }
    return {v, DomainFailure::none};
}

EvalOutcome classify_binary(BinaryOp op, double a, double b) {
    if (op == BinaryOp::div && b == 0.0) {
        return {kNaN, DomainFailure::division};
    }
    const double v = apply(op, a, b);
    if (!(std::fabs(v) <= kOverflowBound)) {
        return {kNaN, DomainFailure::overflow};
    }
    return {v, DomainFailure::none};
}

std::size_t max_stack_depth(std::span<const Node> nodes) {
    std::size_t depth = 0;
    std::size_t best = 0;
    for (std::size_t k = nodes.size(); k-- > 0;) {
        depth = depth + 1 - static_cast<std::size_t>(nodes[k].arity());
        best = std::max(best, depth);
    }
    return best;
}

}  // namespace

EvalOutcome eval(const Expression& expr, std::span<const double> point) {
    const auto nodes = expr.nodes();
    std::vector<EvalOutcome> stack;
    stack.reserve(max_stack_depth(nodes));
    for (std::size_t k = nodes.size(); k-- > 0;) {
        const Node& n = nodes[k];
        switch (n.kind) {
            case NodeKind::constant:
                stack.push_back({n.value, DomainFailure::none});
                break;
            case NodeKind::variable: {
                const double v = point[n.var];
                stack.push_back(std::isfinite(v) ? EvalOutcome{v, DomainFailure::none}
                                                 : EvalOutcome{kNaN, DomainFailure::domain});
                break;
            }
            case NodeKind::unary: {
                auto& top = stack.back();
                if (top.ok()) {
                    top = classify_unary(n.unary_op(), top.value);
                }
                break;
            }
            case NodeKind::binary: {
                const EvalOutcome left = stack.back();
                stack.pop_back();
                auto& right = stack.back();
                if (!left.ok()) {
                    right = left;
                } else if (right.ok()) {
                    right = classify_binary(n.binary_op(), left.value, right.value);
                }
                break;
            }
        }
    }
    return stack.back();
}

bool eval_into(const Expression& expr, const Matrix& points, std::span<double> out) {
    const std::size_t rows = points.rows();
    if (out.size() != rows) {
        throw std::invalid_argument("eval_into: output length mismatch");
    }
    if (rows == 0) {
        return true;
    }
    const auto nodes = expr.nodes();
    thread_local std::vector<double> work;
    const std::size_t slots = max_stack_depth(nodes);
    if (work.size() < slots * rows) {
        work.resize(slots * rows);
    }
    std::size_t top = 0;  // number of occupied slots
    auto slot = [&](std::size_t s) { return work.data() + s * rows; };

    for (std::size_t k = nodes.size(); k-- > 0;) {
        const Node& n = nodes[k];
        switch (n.kind) {
            case NodeKind::constant: {
                double* dst = slot(top++);
                std::fill(dst, dst + rows, n.value);
                break;
            }
            case NodeKind::variable: {
                double* dst = slot(top++);
                const auto src = points.col(n.var);
                for (std::size_t r = 0; r < rows; ++r) {
                    dst[r] = std::isfinite(src[r]) ? src[r] : kNaN;
                }
                break;
            }
            case NodeKind::unary: {
                double* x = slot(top - 1);
                const UnaryOp op = n.unary_op();
                switch (op) {
                    case UnaryOp::square:
                        for (std::size_t r = 0; r < rows; ++r) x[r] = sanitize(x[r] * x[r]);
                        break;
                    case UnaryOp::cube:
                        for (std::size_t r = 0; r < rows; ++r) x[r] = sanitize(x[r] * x[r] * x[r]);
                        break;
                    default:
                        for (std::size_t r = 0; r < rows; ++r) x[r] = sanitize(apply(op, x[r]));
                        break;
                }
                break;
            }
            case NodeKind::binary: {
                const double* left = slot(top - 1);
                double* right = slot(top - 2);
                switch (n.binary_op()) {
                    case BinaryOp::add:
                        for (std::size_t r = 0; r < rows; ++r) right[r] = sanitize(left[r] + right[r]);
                        break;
                    case BinaryOp::sub:
                        for (std::size_t r = 0; r < rows; ++r) right[r] = sanitize(left[r] - right[r]);
                        break;
                    case BinaryOp::mul:
                        for (std::size_t r = 0; r < rows; ++r) right[r] = sanitize(left[r] * right[r]);
                        break;
                    case BinaryOp::div:
                        for (std::size_t r = 0; r < rows; ++r) right[r] = sanitize(left[r] / right[r]);
                        break;
                }
                --top;
                break;
            }
        }
    }
    const double* result = slot(0);
    bool clean = true;
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] = result[r];
        clean = clean && !std::isnan(result[r]);
    }
    return clean;
}

std::vector<EvalOutcome> eval_batch(const Expression& expr, const Matrix& points) {
    std::vector<double> values(points.rows());
    eval_into(expr, points, values);
    std::vector<EvalOutcome> out(points.rows());
    for (std::size_t r = 0; r < points.rows(); ++r) {
        if (std::isnan(values[r])) {
            // Rare path: recover the failure kind from the scalar evaluator.
            out[r] = eval(expr, points.row(r));
        } else {
            out[r] = {values[r], DomainFailure::none};
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structure

bool check_nesting(const Expression& expr, const OperatorSet& opset) {
    const auto nodes = expr.nodes();
    std::vector<UnaryMask> stack;
    stack.reserve(nodes.size());
    for (std::size_t k = nodes.size(); k-- > 0;) {
        const Node& n = nodes[k];
        switch (n.kind) {
            case NodeKind::constant:
            case NodeKind::variable:
                stack.push_back(0);
                break;
            case NodeKind::unary: {
                const UnaryOp op = n.unary_op();
                if (stack.back() & opset.forbidden_below(op)) {
                    return false;
                }
                stack.back() |= mask_of(op);
                break;
            }
            case NodeKind::binary: {
                const UnaryMask left = stack.back();
                stack.pop_back();
                stack.back() |= left;
                break;
            }
        }
    }
    return true;
}

bool uses_only(const Expression& expr, const OperatorSet& opset) {
    for (const auto& n : expr.nodes()) {
        if (n.kind == NodeKind::unary && !opset.has(n.unary_op())) {
            return false;
        }
        if (n.kind == NodeKind::binary && !opset.has(n.binary_op())) {
            return false;
        }
    }
    return true;
}

Expression fold_constants(const Expression& expr) {
    const auto nodes = expr.nodes();
    bool any_op = false;
    for (const auto& n : nodes) {
        any_op = any_op || !n.is_leaf();
    }
    if (!any_op) {
        return expr;
    }
    // constant_only[k]: subtree at k has no variables.
    const auto end = expr.subtree_ends();
    std::vector<char> constant_only(nodes.size());
    for (std::size_t k = nodes.size(); k-- > 0;) {
        switch (nodes[k].arity()) {
            case 0: constant_only[k] = nodes[k].kind == NodeKind::constant; break;
            case 1: constant_only[k] = constant_only[k + 1]; break;
            default: constant_only[k] = constant_only[k + 1] && constant_only[end[k + 1]]; break;
        }
    }
    std::vector<Node> out;
    out.reserve(nodes.size());
    for (std::size_t k = 0; k < nodes.size();) {
        if (!nodes[k].is_leaf() && constant_only[k]) {
            const auto sub = expr.subtree(k);
            const auto v = eval(sub, {});
            if (v.ok()) {
                out.push_back(Node{NodeKind::constant, 0, 0, v.value});
                k = end[k];
                continue;
            }
        }
        out.push_back(nodes[k]);
        ++k;
    }
    return Expression::from_prefix(std::move(out));
}

namespace {

Node make_leaf(std::size_t n_vars, Rng& rng, const RandomExprOptions& options) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (n_vars == 0 || u01(rng) < options.constant_probability) {
        std::uniform_real_distribution<double> c(options.constant_low, options.constant_high);
        return Node{NodeKind::constant, 0, 0, c(rng)};
    }
    std::uniform_int_distribution<std::size_t> v(0, n_vars - 1);
    return Node{NodeKind::variable, 0, static_cast<std::uint32_t>(v(rng)), 0.0};
}

void grow(const OperatorSet& opset, std::size_t n_vars, std::size_t depth, std::size_t max_depth,
          UnaryMask banned, Rng& rng, const RandomExprOptions& options, std::vector<Node>& out) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (depth >= max_depth) {
        out.push_back(make_leaf(n_vars, rng, options));
        return;
    }
    std::vector<UnaryOp> allowed;
    for (UnaryOp op : opset.unary_ops) {
        if (!(banned & mask_of(op))) {
            allowed.push_back(op);
        }
    }
    const double r = u01(rng);
    if (r < options.leaf_probability || (allowed.empty() && opset.binary_ops.empty())) {
        out.push_back(make_leaf(n_vars, rng, options));
        return;
    }
    const bool pick_unary =
        !allowed.empty() && (opset.binary_ops.empty() || r < options.leaf_probability + options.unary_probability);
    if (pick_unary) {
        std::uniform_int_distribution<std::size_t> pick(0, allowed.size() - 1);
        const UnaryOp op = allowed[pick(rng)];
        out.push_back(Node{NodeKind::unary, static_cast<std::uint8_t>(op), 0, 0.0});
        grow(opset, n_vars, depth + 1, max_depth, banned | opset.forbidden_below(op), rng, options, out);
        return;
    }
    std::uniform_int_distribution<std::size_t> pick(0, opset.binary_ops.size() - 1);
    const BinaryOp op = opset.binary_ops[pick(rng)];
    out.push_back(Node{NodeKind::binary, static_cast<std::uint8_t>(op), 0, 0.0});
    grow(opset, n_vars, depth + 1, max_depth, banned, rng, options, out);
    grow(opset, n_vars, depth + 1, max_depth, banned, rng, options, out);
}

}  // namespace

Expression random_leaf(std::size_t n_vars, Rng& rng, const RandomExprOptions& options) {
    return Expression::from_prefix({make_leaf(n_vars, rng, options)});
}

Expression random_expr(const OperatorSet& opset, std::size_t n_vars, std::size_t max_depth, Rng& rng,
                       const RandomExprOptions& options) {
    if (max_depth < 1) {
        throw std::invalid_argument("random_expr: max_depth must be >= 1");
    }
    std::vector<Node> nodes;
    grow(opset, n_vars, 1, max_depth, 0, rng, options, nodes);
    return Expression::from_prefix(std::move(nodes));
}

// ---------------------------------------------------------------------------
// Text form

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

void format_at(const Expression& e, std::size_t& i, std::span<const std::string> names, std::string& out) {
    const Node& n = e.node(i++);
    switch (n.kind) {
        case NodeKind::constant:
            out += format_number(n.value);
            break;
        case NodeKind::variable:
            if (n.var < names.size()) {
                out += names[n.var];
            } else {
                out += 'x';
                out += std::to_string(n.var);
            }
            break;
        case NodeKind::unary:
            out += op_name(n.unary_op());
            out += '(';
            format_at(e, i, names, out);
            out += ')';
            break;
        case NodeKind::binary:
            out += '(';
            format_at(e, i, names, out);
            out += ' ';
            out += op_symbol(n.binary_op());
            out += ' ';
            format_at(e, i, names, out);
            out += ')';
            break;
    }
}

class Parser {
public:
    Parser(std::string_view text, const OperatorSet& opset, std::span<const std::string> names)
        : text_(text), opset_(opset), names_(names) {}

    Expression run() {
        auto e = expr();
        skip_ws();
        if (pos_ != text_.size()) {
            throw ParseError("unexpected '" + std::string(1, text_[pos_]) + "'", pos_);
        }
        return e;
    }

private:
    Expression expr() {
        auto lhs = term();
        for (;;) {
            skip_ws();
            if (peek() == '+' || peek() == '-') {
                const BinaryOp op = text_[pos_++] == '+' ? BinaryOp::add : BinaryOp::sub;
                lhs = Expression::binary(op, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    Expression term() {
        auto lhs = signed_factor();
        for (;;) {
            skip_ws();
            if (peek() == '*' || peek() == '/') {
                const BinaryOp op = text_[pos_++] == '*' ? BinaryOp::mul : BinaryOp::div;
                lhs = Expression::binary(op, lhs, signed_factor());
            } else {
                return lhs;
            }
        }
    }

    Expression signed_factor() {
        skip_ws();
        if (peek() == '-') {
            const std::size_t at = pos_++;
            skip_ws();
            if (is_number_start(peek())) {
                return number(at, true);
            }
            return Expression::binary(BinaryOp::mul, Expression::constant(-1.0), signed_factor());
        }
        if (peek() == '+') {
            ++pos_;
            return signed_factor();
        }
        return primary();
    }

    Expression primary() {
        skip_ws();
        if (pos_ >= text_.size()) {
            throw ParseError("unexpected end of input", pos_);
        }
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = expr();
            expect(')');
            return inner;
        }
        if (is_number_start(c)) {
            return number(pos_, false);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
                ++pos_;
            }
            const std::string_view ident = text_.substr(start, pos_ - start);
            skip_ws();
            if (peek() == '(') {
                const auto op = unary_from_name(ident);
                if (!op) {
                    throw ParseError("unknown function '" + std::string(ident) + "'", start);
                }
                if (!opset_.has(*op)) {
                    throw ParseError("function '" + std::string(ident) + "' is not in the operator set", start);
                }
                ++pos_;
                auto arg = expr();
                expect(')');
                return Expression::unary(*op, arg);
            }
            return variable(ident, start);
        }
        throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
    }

    Expression variable(std::string_view ident, std::size_t at) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == ident) {
                return Expression::variable(i);
            }
        }
        if (ident.size() > 1 && ident[0] == 'x') {
            std::size_t idx = 0;
            const auto res = std::from_chars(ident.data() + 1, ident.data() + ident.size(), idx);
            if (res.ec == std::errc() && res.ptr == ident.data() + ident.size()) {
                return Expression::variable(idx);
            }
        }
        throw ParseError("unknown variable '" + std::string(ident) + "'", at);
    }

    Expression number(std::size_t at, bool negative) {
        double v = 0.0;
        const char* first = text_.data() + pos_;
        const char* last = text_.data() + text_.size();
        const auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc()) {
            throw ParseError("malformed number", at);
        }
        pos_ += static_cast<std::size_t>(res.ptr - first);
        return Expression::constant(negative ? -v : v);
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size()) {
            throw ParseError(std::string("expected '") + c + "' but input ended", pos_);
        }
        if (text_[pos_] != c) {
            throw ParseError(std::string("expected '") + c + "'", pos_);
        }
        ++pos_;
    }

    static bool is_number_start(char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.'; }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    std::string_view text_;
    const OperatorSet& opset_;
    std::span<const std::string> names_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string format(const Expression& expr, std::span<const std::string> names) {
    std::string out;
    std::size_t i = 0;
    format_at(expr, i, names, out);
    return out;
}

Expression parse(std::string_view text, const OperatorSet& opset, std::span<const std::string> names) {
    return Parser(text, opset, names).run();
}

}  // namespace eqlab
