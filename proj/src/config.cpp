#include "eqlab/config.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <set>

namespace eqlab {

namespace {

std::string describe(const std::vector<FieldError>& errors) {
    std::string out = "invalid configuration";
    for (std::size_t i = 0; i < errors.size(); ++i) {
        out += i == 0 ? ": " : "; ";
        out += errors[i].path.empty() ? "(document)" : errors[i].path;
        out += ": " + errors[i].message;
    }
    return out;
}

// Reads fields of one JSON object. Keys not consumed by the time finish() runs
// are reported as unknown.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path, JsonContext& ctx) : j_(j), path_(std::move(path)), ctx_(ctx) {
        valid_ = j.is_object();
        if (!valid_) {
            ctx_.error(path_, "must be an object");
        }
    }

    bool valid() const { return valid_; }

    const Json* get(const std::string& key) {
        used_.insert(key);
        if (!valid_) {
            return nullptr;
        }
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const std::string& key) const { return join_path(path_, key); }

    void size(const std::string& key, std::size_t& out, std::size_t min = 0) {
        if (const Json* v = get(key)) {
            if (auto n = as_size(*v, path(key))) {
                if (*n < min) {
                    ctx_.error(path(key), "must be >= " + std::to_string(min));
                } else {
                    out = *n;
                }
            }
        }
    }

    void seed(const std::string& key, std::uint64_t& out) {
        if (const Json* v = get(key)) {
            if (v->is_number_unsigned()) {
                out = v->get<std::uint64_t>();
            } else if (v->is_number_integer() && v->get<std::int64_t>() >= 0) {
                out = static_cast<std::uint64_t>(v->get<std::int64_t>());
            } else {
                ctx_.error(path(key), "must be a non-negative integer");
            }
        }
    }

    void real(const std::string& key, double& out, double lo = -std::numeric_limits<double>::infinity(),
              double hi = std::numeric_limits<double>::infinity()) {
        if (const Json* v = get(key)) {
            if (!v->is_number() || !std::isfinite(v->get<double>())) {
                ctx_.error(path(key), "must be a finite number");
                return;
            }
            const double d = v->get<double>();
            if (d < lo || d > hi) {
                ctx_.error(path(key), "must be in [" + format_number(lo) + ", " + format_number(hi) + "]");
                return;
            }
            out = d;
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const Json* v = get(key)) {
            if (!v->is_boolean()) {
                ctx_.error(path(key), "must be true or false");
            } else {
                out = v->get<bool>();
            }
        }
    }

    void string(const std::string& key, std::string& out) {
        if (const Json* v = get(key)) {
            if (!v->is_string()) {
                ctx_.error(path(key), "must be a string");
            } else {
                out = v->get<std::string>();
            }
        }
    }

    void finish() {
        if (!valid_) {
            return;
        }
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) {
                ctx_.error(join_path(path_, it.key()), "unknown field");
            }
        }
    }

    std::optional<std::size_t> as_size(const Json& v, const std::string& p) {
        if (v.is_number_unsigned()) {
            return v.get<std::size_t>();
        }
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
            return static_cast<std::size_t>(v.get<std::int64_t>());
        }
        ctx_.error(p, "must be a non-negative integer");
        return std::nullopt;
    }

    JsonContext& ctx() { return ctx_; }

private:
    const Json& j_;
    std::string path_;
    JsonContext& ctx_;
    bool valid_ = false;
    std::set<std::string> used_;
};

// Axis given as an index or a feature name.
std::optional<std::size_t> read_axis(const Json& v, const std::string& path, std::span<const std::string> names,
                                     JsonContext& ctx) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == s) {
                return i;
            }
        }
        ctx.error(path, "unknown variable '" + s + "'");
        return std::nullopt;
    }
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
        const auto i = static_cast<std::size_t>(v.get<std::int64_t>());
        if (!names.empty() && i >= names.size()) {
            ctx.error(path, "axis " + std::to_string(i) + " is out of range");
            return std::nullopt;
        }
        return i;
    }
    ctx.error(path, "must be a variable name or a non-negative index");
    return std::nullopt;
}

template <typename E, typename F>
void read_enum(ObjectReader& r, const std::string& key, E& out, F&& from_name, const std::string& choices) {
    if (const Json* v = r.get(key)) {
        if (!v->is_string()) {
            r.ctx().error(r.path(key), "must be one of " + choices);
            return;
        }
        if (auto e = from_name(v->get<std::string>())) {
            out = *e;
        } else {
            r.ctx().error(r.path(key), "must be one of " + choices);
        }
    }
}

std::optional<Direction> direction_from_name(std::string_view s) {
    if (s == "increasing") return Direction::increasing;
    if (s == "decreasing") return Direction::decreasing;
    return std::nullopt;
}

std::optional<SignRequirement> sign_from_name(std::string_view s) {
    if (s == "nonnegative") return SignRequirement::nonnegative;
    if (s == "nonpositive") return SignRequirement::nonpositive;
    return std::nullopt;
}

std::optional<DivergencePolarity> polarity_from_name(std::string_view s) {
    if (s == "must_diverge") return DivergencePolarity::must_diverge;
    if (s == "must_stay_bounded") return DivergencePolarity::must_stay_bounded;
    return std::nullopt;
}

// Runs a library validate() and files its message under `path`.
template <typename T>
void library_validate(const T& value, const std::string& path, JsonContext& ctx) {
    try {
        value.validate();
    } catch (const std::invalid_argument& e) {
        ctx.error(path, e.what());
    }
}

Json json_number(double v) {
    // Infinite region bounds are written as null.
    return std::isfinite(v) ? Json(v) : Json();
}

}  // namespace

ConfigError::ConfigError(std::vector<FieldError> errors)
    : std::runtime_error(describe(errors)), errors_(std::move(errors)) {}

Json ConfigError::to_json() const {
    Json fields = Json::array();
    for (const auto& e : errors_) {
        fields.push_back({{"path", e.path}, {"message", e.message}});
    }
    return {{"error", "validation failed"}, {"fields", fields}};
}

void JsonContext::check() const {
    if (!errors_.empty()) {
        throw ConfigError(errors_);
    }
}

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

std::string join_path(const std::string& base, std::size_t index) { return base + "[" + std::to_string(index) + "]"; }

// ---------------------------------------------------------------------------

OperatorSet opset_from_json(const Json& j, const std::string& path, JsonContext& ctx) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "default") return OperatorSet::defaults();
        if (s == "growth") return OperatorSet::growth();
        if (s == "all") return OperatorSet::all();
        ctx.error(path, "must be \"default\", \"growth\", \"all\" or an object");
        return OperatorSet::defaults();
    }
    OperatorSet out;
    ObjectReader r(j, path, ctx);
    if (!r.valid()) {
        return OperatorSet::defaults();
    }
    if (const Json* b = r.get("binary"); b && b->is_array()) {
        for (std::size_t i = 0; i < b->size(); ++i) {
            const Json& v = (*b)[i];
            std::optional<BinaryOp> op;
            if (v.is_string()) {
                const auto s = v.get<std::string>();
                op = binary_from_name(s);
                for (BinaryOp k : {BinaryOp::add, BinaryOp::sub, BinaryOp::mul, BinaryOp::div}) {
                    if (!op && s == op_symbol(k)) {
                        op = k;
                    }
                }
            }
            if (!op) {
                ctx.error(join_path(r.path("binary"), i), "unknown binary operator");
            } else {
                out.binary_ops.push_back(*op);
            }
        }
    } else {
        ctx.error(r.path("binary"), "required array of binary operators");
    }
    if (const Json* u = r.get("unary")) {
        if (!u->is_array()) {
            ctx.error(r.path("unary"), "must be an array");
        } else {
            for (std::size_t i = 0; i < u->size(); ++i) {
                const Json& v = (*u)[i];
                const auto op = v.is_string() ? unary_from_name(v.get<std::string>()) : std::nullopt;
                if (!op) {
                    ctx.error(join_path(r.path("unary"), i), "unknown unary operator");
                } else {
                    out.unary_ops.push_back(*op);
                }
            }
        }
    }
    bool self_nesting = false;
    r.boolean("allow_self_nesting", self_nesting);
    if (!self_nesting) {
        for (UnaryOp op : out.unary_ops) {
            out.forbid(op, op);
        }
    }
    if (const Json* f = r.get("forbid")) {
        if (!f->is_object()) {
            ctx.error(r.path("forbid"), "must map an operator to the operators forbidden below it");
        } else {
            for (auto it = f->begin(); it != f->end(); ++it) {
                const std::string p = join_path(r.path("forbid"), it.key());
                const auto outer = unary_from_name(it.key());
                if (!outer || !out.has(*outer)) {
                    ctx.error(p, "not a unary operator of this set");
                    continue;
                }
                if (!it.value().is_array()) {
                    ctx.error(p, "must be an array");
                    continue;
                }
                for (std::size_t i = 0; i < it.value().size(); ++i) {
                    const Json& v = it.value()[i];
                    const auto inner = v.is_string() ? unary_from_name(v.get<std::string>()) : std::nullopt;
                    if (!inner || !out.has(*inner)) {
                        ctx.error(join_path(p, i), "not a unary operator of this set");
                    } else {
                        out.forbid(*outer, *inner);
                    }
                }
            }
        }
    }
    r.finish();
    if (ctx.ok() && out.binary_ops.empty()) {
        ctx.error(r.path("binary"), "needs at least one operator");
    }
    return out;
}

Json opset_to_json(const OperatorSet& opset) {
    Json binary = Json::array();
    for (BinaryOp op : opset.binary_ops) {
        binary.push_back(std::string(op_name(op)));
    }
    Json unary = Json::array();
    Json forbid = Json::object();
    for (UnaryOp op : opset.unary_ops) {
        unary.push_back(std::string(op_name(op)));
        Json inner = Json::array();
        for (UnaryOp other : opset.unary_ops) {
            if (opset.forbidden_below(op) & mask_of(other)) {
                inner.push_back(std::string(op_name(other)));
            }
        }
        forbid[std::string(op_name(op))] = inner;
    }
    return {{"binary", binary}, {"unary", unary}, {"allow_self_nesting", true}, {"forbid", forbid}};
}

// ---------------------------------------------------------------------------

ConstraintSpec constraint_from_json(const Json& j, const std::string& path, std::span<const std::string> names,
                                    JsonContext& ctx) {
    ConstraintSpec out;
    ObjectReader r(j, path, ctx);
    if (!r.valid()) {
        return out;
    }
    if (const Json* k = r.get("kind"); k && k->is_string() && kind_from_name(k->get<std::string>())) {
        out.kind = *kind_from_name(k->get<std::string>());
    } else {
        ctx.error(r.path("kind"), "required; one of divergence, symmetry, sign, monotonic, asymptote");
    }
    if (const Json* a = r.get("axes")) {
        if (!a->is_array()) {
            ctx.error(r.path("axes"), "must be an array");
        } else {
            for (std::size_t i = 0; i < a->size(); ++i) {
                if (auto axis = read_axis((*a)[i], join_path(r.path("axes"), i), names, ctx)) {
                    out.axes.push_back(*axis);
                }
            }
        }
    }
    if (const Json* p = r.get("pairs")) {
        if (!p->is_array()) {
            ctx.error(r.path("pairs"), "must be an array of [i, j] pairs");
        } else {
            for (std::size_t i = 0; i < p->size(); ++i) {
                const std::string pp = join_path(r.path("pairs"), i);
                const Json& v = (*p)[i];
                if (!v.is_array() || v.size() != 2) {
                    ctx.error(pp, "must be a two-element array");
                    continue;
                }
                const auto a = read_axis(v[0], join_path(pp, 0), names, ctx);
                const auto b = read_axis(v[1], join_path(pp, 1), names, ctx);
                if (a && b) {
                    out.pairs.emplace_back(*a, *b);
                }
            }
        }
    }
    if (const Json* reg = r.get("region")) {
        if (!reg->is_array()) {
            ctx.error(r.path("region"), "must be an array");
        } else {
            for (std::size_t i = 0; i < reg->size(); ++i) {
                const std::string rp = join_path(r.path("region"), i);
                ObjectReader br((*reg)[i], rp, ctx);
                if (!br.valid()) {
                    continue;
                }
                RegionBound b;
                if (const Json* ax = br.get("axis")) {
                    if (auto axis = read_axis(*ax, br.path("axis"), names, ctx)) {
                        b.axis = *axis;
                    }
                } else {
                    ctx.error(br.path("axis"), "required");
                }
                for (const char* key : {"low", "high"}) {
                    double& slot = std::string(key) == "low" ? b.low : b.high;
                    if (const Json* v = br.get(key); v && !v->is_null()) {
                        if (!v->is_number()) {
                            ctx.error(br.path(key), "must be a number or null");
                        } else {
                            slot = v->get<double>();
                        }
                    }
                }
                if (!(b.low <= b.high)) {
                    ctx.error(rp, "low must not exceed high");
                }
                br.finish();
                out.region.push_back(b);
            }
        }
    }
    if (const Json* pr = r.get("probes")) {
        if (!pr->is_array()) {
            ctx.error(r.path("probes"), "must be an array of points");
        } else {
            for (std::size_t i = 0; i < pr->size(); ++i) {
                const Json& v = (*pr)[i];
                std::vector<double> pt;
                bool good = v.is_array() && (names.empty() || v.size() == names.size());
                for (std::size_t k = 0; good && k < v.size(); ++k) {
                    good = v[k].is_number();
                    if (good) {
                        pt.push_back(v[k].get<double>());
                    }
                }
                if (!good) {
                    ctx.error(join_path(r.path("probes"), i), "must be an array of one number per variable");
                } else {
                    out.probes.push_back(std::move(pt));
                }
            }
        }
    }
    r.boolean("use_dataset_rows", out.use_dataset_rows);
    if (const Json* pj = r.get("params")) {
        ObjectReader p(*pj, r.path("params"), ctx);
        ConstraintParams& q = out.params;
        p.real("c", q.c);
        p.real("n", q.n);
        p.real("tol", q.tol, 0.0);
        p.real("step", q.step);
        p.real("threshold", q.threshold, 0.0);
        p.real("at", q.at);
        p.real("approach", q.approach);
        p.real("rel_tol", q.rel_tol, 0.0);
        read_enum(p, "direction", q.direction, direction_from_name, "increasing, decreasing");
        read_enum(p, "sign", q.sign, sign_from_name, "nonnegative, nonpositive");
        read_enum(p, "polarity", q.polarity, polarity_from_name, "must_diverge, must_stay_bounded");
        p.size("max_samples", q.max_samples, 1);
        p.size("max_base_points", q.max_base_points, 1);
        p.finish();
    }
    r.finish();
    if (ctx.ok()) {
        library_validate(out, path, ctx);
    }
    return out;
}

Json constraint_to_json(const ConstraintSpec& spec) {
    Json j;
    j["kind"] = std::string(kind_name(spec.kind));
    j["axes"] = spec.axes;
    Json pairs = Json::array();
    for (const auto& [a, b] : spec.pairs) {
        pairs.push_back({a, b});
    }
    j["pairs"] = pairs;
    Json region = Json::array();
    for (const auto& b : spec.region) {
        region.push_back({{"axis", b.axis}, {"low", json_number(b.low)}, {"high", json_number(b.high)}});
    }
    j["region"] = region;
    j["probes"] = spec.probes;
    j["use_dataset_rows"] = spec.use_dataset_rows;
    const ConstraintParams& q = spec.params;
    j["params"] = {{"c", q.c},
                   {"n", q.n},
                   {"tol", q.tol},
                   {"step", q.step},
                   {"threshold", q.threshold},
                   {"at", q.at},
                   {"approach", q.approach},
                   {"rel_tol", q.rel_tol},
                   {"direction", q.direction == Direction::increasing ? "increasing" : "decreasing"},
                   {"sign", q.sign == SignRequirement::nonnegative ? "nonnegative" : "nonpositive"},
                   {"polarity",
                    q.polarity == DivergencePolarity::must_diverge ? "must_diverge" : "must_stay_bounded"},
                   {"max_samples", q.max_samples},
                   {"max_base_points", q.max_base_points}};
    return j;
}

FitnessConfig fitness_from_json(const Json& j, const std::string& path, std::span<const std::string> names,
                                JsonContext& ctx) {
    FitnessConfig out;
    ObjectReader r(j, path, ctx);
    if (!r.valid()) {
        return out;
    }
    r.real("lambda", out.lambda, 0.0);
    r.real("parsimony", out.parsimony, 0.0);
    if (const Json* s = r.get("constraint_schedule"); s && !s->is_null()) {
        if (auto n = r.as_size(*s, r.path("constraint_schedule"))) {
            out.constraint_schedule = *n;
        }
    }
    if (const Json* c = r.get("constraints")) {
        if (!c->is_array()) {
            ctx.error(r.path("constraints"), "must be an array");
        } else {
            for (std::size_t i = 0; i < c->size(); ++i) {
                out.constraints.push_back(constraint_from_json((*c)[i], join_path(r.path("constraints"), i), names, ctx));
            }
        }
    }
    r.finish();
    return out;
}

Json fitness_to_json(const FitnessConfig& config) {
    Json constraints = Json::array();
    for (const auto& c : config.constraints) {
        constraints.push_back(constraint_to_json(c));
    }
    return {{"lambda", config.lambda},
            {"parsimony", config.parsimony},
            {"constraint_schedule", config.constraint_schedule ? Json(*config.constraint_schedule) : Json()},
            {"constraints", constraints}};
}

// ---------------------------------------------------------------------------

EvolutionConfig evolution_from_json(const Json& j, const std::string& path, std::span<const std::string> names,
                                    JsonContext& ctx) {
    EvolutionConfig out;
    ObjectReader r(j, path, ctx);
    if (!r.valid()) {
        return out;
    }
    r.size("population_count", out.population_count, 1);
    r.size("population_size", out.population_size, 2);
    r.size("iterations", out.iterations, 1);
    r.size("tournament_size", out.tournament_size, 1);
    r.real("tournament_probability", out.tournament_probability, 0.0, 1.0);
    r.real("crossover_probability", out.crossover_probability, 0.0, 1.0);
    r.real("mutation_probability", out.mutation_probability, 0.0, 1.0);
    r.size("max_complexity", out.max_complexity, 1);
    r.size("init_max_depth", out.init_max_depth, 1);
    r.size("migration_interval", out.migration_interval);
    r.real("migration_fraction", out.migration_fraction, 0.0, 1.0);
    r.size("crossover_retries", out.crossover_retries);
    r.boolean("refit_constants", out.refit_constants);
    r.size("refit_max_evaluations", out.refit_max_evaluations);
    r.real("optimize_probability", out.optimize_probability, 0.0, 1.0);
    r.size("optimize_evaluations", out.optimize_evaluations);
    r.size("threads", out.threads);
    r.seed("seed", out.seed);
    if (const Json* m = r.get("mutation")) {
        ObjectReader mr(*m, r.path("mutation"), ctx);
        if (const Json* w = mr.get("weights")) {
            ObjectReader wr(*w, mr.path("weights"), ctx);
            for (std::size_t k = 0; k < kMutationKindCount; ++k) {
                wr.real(std::string(mutation_name(static_cast<MutationKind>(k))), out.mutation.weights[k], 0.0);
            }
            wr.finish();
        }
        mr.real("constant_sigma", out.mutation.constant_sigma, 0.0);
        mr.size("retries", out.mutation.retries, 1);
        if (const Json* l = mr.get("leaves")) {
            ObjectReader lr(*l, mr.path("leaves"), ctx);
            RandomExprOptions& o = out.mutation.leaves;
            lr.real("leaf_probability", o.leaf_probability, 0.0, 1.0);
            lr.real("unary_probability", o.unary_probability, 0.0, 1.0);
            lr.real("constant_probability", o.constant_probability, 0.0, 1.0);
            lr.real("constant_low", o.constant_low);
            lr.real("constant_high", o.constant_high);
            lr.finish();
        }
        mr.finish();
    }
    if (const Json* f = r.get("fitness")) {
        out.fitness = fitness_from_json(*f, r.path("fitness"), names, ctx);
    }
    if (const Json* c = r.get("census_patterns")) {
        if (!c->is_array()) {
            ctx.error(r.path("census_patterns"), "must be an array of expressions");
        } else {
            for (std::size_t i = 0; i < c->size(); ++i) {
                const std::string p = join_path(r.path("census_patterns"), i);
                if (!(*c)[i].is_string()) {
                    ctx.error(p, "must be an expression string");
                    continue;
                }
                try {
                    out.census_patterns.push_back(parse((*c)[i].get<std::string>(), OperatorSet::all(), names));
                } catch (const ParseError& e) {
                    ctx.error(p, e.what());
                }
            }
        }
    }
    r.finish();
    if (ctx.ok()) {
        library_validate(out, path, ctx);
    }
    return out;
}

Json evolution_to_json(const EvolutionConfig& c, std::span<const std::string> names) {
    Json weights = Json::object();
    for (std::size_t k = 0; k < kMutationKindCount; ++k) {
        weights[std::string(mutation_name(static_cast<MutationKind>(k)))] = c.mutation.weights[k];
    }
    const RandomExprOptions& o = c.mutation.leaves;
    Json patterns = Json::array();
    for (const auto& e : c.census_patterns) {
        patterns.push_back(format(e, names));
    }
    return {{"population_count", c.population_count},
            {"population_size", c.population_size},
            {"iterations", c.iterations},
            {"tournament_size", c.tournament_size},
            {"tournament_probability", c.tournament_probability},
            {"crossover_probability", c.crossover_probability},
            {"mutation_probability", c.mutation_probability},
            {"max_complexity", c.max_complexity},
            {"init_max_depth", c.init_max_depth},
            {"migration_interval", c.migration_interval},
            {"migration_fraction", c.migration_fraction},
            {"crossover_retries", c.crossover_retries},
            {"refit_constants", c.refit_constants},
            {"refit_max_evaluations", c.refit_max_evaluations},
            {"optimize_probability", c.optimize_probability},
            {"optimize_evaluations", c.optimize_evaluations},
            {"threads", c.threads},
            {"seed", c.seed},
            {"mutation",
             {{"weights", weights},
              {"constant_sigma", c.mutation.constant_sigma},
              {"retries", c.mutation.retries},
              {"leaves",
               {{"leaf_probability", o.leaf_probability},
                {"unary_probability", o.unary_probability},
                {"constant_probability", o.constant_probability},
                {"constant_low", o.constant_low},
                {"constant_high", o.constant_high}}}}},
            {"fitness", fitness_to_json(c.fitness)},
            {"census_patterns", patterns}};
}

// ---------------------------------------------------------------------------

BenchmarkSpec benchmark_spec_from_json(const Json& j) {
    JsonContext ctx;
    BenchmarkSpec spec;
    ObjectReader r(j, "", ctx);
    if (!r.valid()) {
        ctx.check();
    }
    r.seed("seed", spec.seed);
    r.size("repeats", spec.repeats, 1);
    if (const Json* s = r.get("strategies")) {
        spec.strategies.clear();
        if (!s->is_array()) {
            ctx.error("strategies", "must be an array");
        } else {
            for (std::size_t i = 0; i < s->size(); ++i) {
                const auto st = (*s)[i].is_string() ? strategy_from_name((*s)[i].get<std::string>()) : std::nullopt;
                if (!st) {
                    ctx.error(join_path("strategies", i), "must be one of qbc_ibmd, qbc_cv, random");
                } else {
                    spec.strategies.push_back(*st);
                }
            }
        }
    }
    if (const Json* n = r.get("noise_levels")) {
        spec.noise_levels.clear();
        if (!n->is_array()) {
            ctx.error("noise_levels", "must be an array");
        } else {
            for (std::size_t i = 0; i < n->size(); ++i) {
                if (!(*n)[i].is_number() || !((*n)[i].get<double>() >= 0.0)) {
                    ctx.error(join_path("noise_levels", i), "must be a number >= 0");
                } else {
                    spec.noise_levels.push_back((*n)[i].get<double>());
                }
            }
        }
    }
    ActiveConfig& base = spec.base;
    if (const Json* o = r.get("opset")) {
        base.opset = opset_from_json(*o, "opset", ctx);
    }
    if (const Json* a = r.get("active")) {
        ObjectReader ar(*a, "active", ctx);
        ar.size("pool_size", base.pool_size, 1);
        ar.size("initial_points", base.initial_points, 1);
        ar.size("max_rounds", base.max_rounds, 1);
        ar.size("committee_top_k", base.committee_top_k);
        if (const Json* c = ar.get("criterion")) {
            ObjectReader cr(*c, "active.criterion", ctx);
            RediscoveryCriterion& k = base.criterion;
            cr.real("loss_drop_decades", k.loss_drop_decades, 0.0);
            cr.size("equivalence_samples", k.equivalence_samples, 1);
            cr.real("equivalence_rel_tol", k.equivalence_rel_tol, 0.0);
            cr.boolean("use_loss_cliff", k.use_loss_cliff);
            cr.boolean("use_equivalence", k.use_equivalence);
            cr.size("refit_evaluations", k.refit_evaluations);
            cr.finish();
        }
        ar.finish();
    }
    // Evolution settings are read after the targets so that constraint axes
    // can be named; they are the same for every target.
    const Json* evolution = r.get("evolution");
    if (const Json* t = r.get("targets"); t && t->is_array() && !t->empty()) {
        for (std::size_t i = 0; i < t->size(); ++i) {
            const std::string tp = join_path("targets", i);
            ObjectReader tr((*t)[i], tp, ctx);
            if (!tr.valid()) {
                continue;
            }
            std::string name;
            tr.string("name", name);
            std::optional<GroundTruth> truth;
            if (const Json* e = tr.get("expression")) {
                std::vector<VariableDomain> domains;
                const Json* d = tr.get("domains");
                if (!d || !d->is_array() || d->empty()) {
                    ctx.error(tr.path("domains"), "required with an expression: [{name, low, high}, ...]");
                } else {
                    for (std::size_t k = 0; k < d->size(); ++k) {
                        ObjectReader dr((*d)[k], join_path(tr.path("domains"), k), ctx);
                        VariableDomain vd;
                        dr.string("name", vd.name);
                        dr.real("low", vd.low);
                        dr.real("high", vd.high);
                        dr.finish();
                        domains.push_back(vd);
                    }
                }
                if (!e->is_string()) {
                    ctx.error(tr.path("expression"), "must be a string");
                } else if (ctx.ok()) {
                    try {
                        truth = make_target(name.empty() ? e->get<std::string>() : name, e->get<std::string>(),
                                            domains);
                    } catch (const std::exception& ex) {
                        ctx.error(tr.path("expression"), ex.what());
                    }
                }
            } else {
                truth = find_target(name);
                if (!truth) {
                    ctx.error(tr.path("name"), "unknown built-in target '" + name + "'");
                }
            }
            const std::vector<std::string> names = truth ? truth->names() : std::vector<std::string>{};
            const Json* variants = tr.get("variants");
            if (!variants) {
                if (truth) {
                    spec.cases.push_back({*truth, "none", {}, std::nullopt});
                }
            } else if (!variants->is_array() || variants->empty()) {
                ctx.error(tr.path("variants"), "must be a nonempty array");
            } else {
                for (std::size_t k = 0; k < variants->size(); ++k) {
                    const std::string vp = join_path(tr.path("variants"), k);
                    ObjectReader vr((*variants)[k], vp, ctx);
                    BenchmarkCase bc;
                    vr.string("name", bc.variant);
                    FitnessConfig f;
                    Json fit = Json::object();
                    if (const Json* c = vr.get("constraints")) {
                        fit["constraints"] = *c;
                    }
                    if (const Json* s = vr.get("constraint_schedule")) {
                        fit["constraint_schedule"] = *s;
                    }
                    f = fitness_from_json(fit, vp, names, ctx);
                    bc.constraints = f.constraints;
                    bc.constraint_schedule = f.constraint_schedule;
                    vr.finish();
                    if (truth) {
                        bc.truth = *truth;
                        spec.cases.push_back(std::move(bc));
                    }
                }
            }
            tr.finish();
        }
    } else {
        ctx.error("targets", "required nonempty array");
    }
    if (evolution) {
        base.evolution = evolution_from_json(*evolution, "evolution", {}, ctx);
    }
    r.finish();
    ctx.check();
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::vector<FieldError>{{"", e.what()}});
    }
    return spec;
}

}  // namespace eqlab
