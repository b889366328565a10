#include "eqlab/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "eqlab/random.hpp"

namespace eqlab {

namespace {

// Seed streams derived from the session seed.
constexpr std::uint64_t kAugmentStream = 100;
constexpr std::uint64_t kFallbackStream = 200;
constexpr std::uint64_t kEvolveStream = 1000;

bool is_identifier(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) {
        return false;
    }
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

std::vector<double> axis_values(const Json& j, const std::string& path, JsonContext& ctx, std::size_t limit) {
    std::vector<double> out;
    if (const auto it = j.find("values"); it != j.end()) {
        if (!it->is_array() || it->empty()) {
            ctx.error(join_path(path, "values"), "must be a nonempty array of numbers");
            return out;
        }
        for (std::size_t i = 0; i < it->size(); ++i) {
            if (!(*it)[i].is_number() || !std::isfinite((*it)[i].get<double>())) {
                ctx.error(join_path(join_path(path, "values"), i), "must be a finite number");
            } else {
                out.push_back((*it)[i].get<double>());
            }
        }
        return out;
    }
    const auto number = [&](const char* key) -> std::optional<double> {
        const auto v = j.find(key);
        if (v == j.end() || !v->is_number() || !std::isfinite(v->get<double>())) {
            ctx.error(join_path(path, key), "required finite number (or give \"values\")");
            return std::nullopt;
        }
        return v->get<double>();
    };
    const auto low = number("low");
    const auto high = number("high");
    const auto step = number("step");
    if (!low || !high || !step) {
        return out;
    }
    if (!(*step > 0.0)) {
        ctx.error(join_path(path, "step"), "must be > 0");
        return out;
    }
    if (*high < *low) {
        ctx.error(join_path(path, "high"), "must be >= low");
        return out;
    }
    const double span = (*high - *low) / *step;
    if (span + 1 > static_cast<double>(limit)) {
        ctx.error(path, "grid has more than " + std::to_string(limit) + " points");
        return out;
    }
    const auto n = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(*low + static_cast<double>(i) * *step);
    }
    return out;
}

std::vector<PoolAxis> read_axes(const Json& pool, const char* key, bool required, JsonContext& ctx,
                                std::size_t limit) {
    std::vector<PoolAxis> out;
    const std::string path = join_path("pool", key);
    const auto it = pool.find(key);
    if (it == pool.end()) {
        if (required) {
            ctx.error(path, "required nonempty array");
        }
        return out;
    }
    if (!it->is_array() || (required && it->empty())) {
        ctx.error(path, required ? "required nonempty array" : "must be an array");
        return out;
    }
    for (std::size_t i = 0; i < it->size(); ++i) {
        const std::string p = join_path(path, i);
        const Json& a = (*it)[i];
        if (!a.is_object()) {
            ctx.error(p, "must be an object");
            continue;
        }
        for (auto k = a.begin(); k != a.end(); ++k) {
            if (k.key() != "name" && k.key() != "values" && k.key() != "low" && k.key() != "high" &&
                k.key() != "step") {
                ctx.error(join_path(p, k.key()), "unknown field");
            }
        }
        PoolAxis axis;
        const auto name = a.find("name");
        if (name == a.end() || !name->is_string()) {
            ctx.error(join_path(p, "name"), "required string");
        } else {
            axis.name = name->get<std::string>();
        }
        axis.values = axis_values(a, p, ctx, limit);
        out.push_back(std::move(axis));
    }
    return out;
}

Json axes_to_json(const std::vector<PoolAxis>& axes) {
    Json out = Json::array();
    for (const auto& a : axes) {
        out.push_back({{"name", a.name}, {"values", a.values}});
    }
    return out;
}

std::size_t feature_index(const SessionConfig& c, const std::string& name) {
    const auto it = std::find(c.features.begin(), c.features.end(), name);
    return static_cast<std::size_t>(it - c.features.begin());
}

Matrix grid_of(const std::vector<PoolAxis>& axes) {
    std::size_t rows = 1;
    for (const auto& a : axes) {
        rows *= a.values.size();
    }
    Matrix m(rows, axes.size());
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t rem = r;
        for (std::size_t k = axes.size(); k-- > 0;) {
            const std::size_t n = axes[k].values.size();
            m(r, k) = axes[k].values[rem % n];
            rem /= n;
        }
    }
    return m;
}

std::string_view suggestion_state_name(SuggestionState s) {
    switch (s) {
        case SuggestionState::pending: return "pending";
        case SuggestionState::labeled: return "labeled";
        case SuggestionState::skipped: return "skipped";
    }
    return "?";
}

SuggestionState suggestion_state_from_name(const std::string& s) {
    if (s == "labeled") return SuggestionState::labeled;
    if (s == "skipped") return SuggestionState::skipped;
    if (s == "pending") return SuggestionState::pending;
    throw std::runtime_error("unknown suggestion state '" + s + "'");
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(); }

std::optional<double> number_or_null(const Json& j) {
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

// Control values of an observation, in control-axis order.
std::vector<double> controls_of(const SessionConfig& c, const std::vector<double>& features) {
    std::vector<double> out;
    for (const auto& a : c.pool.controls) {
        out.push_back(features[feature_index(c, a.name)]);
    }
    return out;
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw std::runtime_error("write failed for " + path.string() + ": " + std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
}

// Write to a temporary file, fsync, then rename over the target.
void write_atomic(const std::filesystem::path& path, const std::string& data) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) {
        throw std::runtime_error("cannot write " + tmp.string() + ": " + std::strerror(errno));
    }
    try {
        write_all(fd, data, tmp);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::fsync(fd);
    ::close(fd);
    std::filesystem::rename(tmp, path);
    const int dfd = ::open(path.parent_path().c_str(), O_RDONLY);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

void append_line(const std::filesystem::path& path, const std::string& line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) {
        throw std::runtime_error("cannot append to " + path.string() + ": " + std::strerror(errno));
    }
    try {
        write_all(fd, line + "\n", path);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::fsync(fd);
    ::close(fd);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

SessionConfig session_config_from_json(const Json& j) {
    JsonContext ctx;
    SessionConfig c;
    if (!j.is_object()) {
        ctx.error("", "must be an object");
        ctx.check();
    }
    static const std::set<std::string> known = {"features", "target", "seed", "opset", "evolution",
                                                "pool", "batch_size", "augmentation", "measure",
                                                "committee_size", "max_pool_points"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            ctx.error(it.key(), "unknown field");
        }
    }
    const auto size_field = [&](const char* key, std::size_t& out, std::size_t min) {
        if (const auto it = j.find(key); it != j.end()) {
            if (!it->is_number_integer() || it->get<std::int64_t>() < static_cast<std::int64_t>(min)) {
                ctx.error(key, "must be an integer >= " + std::to_string(min));
            } else {
                out = static_cast<std::size_t>(it->get<std::int64_t>());
            }
        }
    };
    if (const auto it = j.find("features"); it != j.end() && it->is_array() && !it->empty()) {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < it->size(); ++i) {
            const Json& f = (*it)[i];
            if (!f.is_string() || !is_identifier(f.get<std::string>())) {
                ctx.error(join_path("features", i), "must be an identifier");
            } else if (!seen.insert(f.get<std::string>()).second) {
                ctx.error(join_path("features", i), "duplicate feature name");
            } else {
                c.features.push_back(f.get<std::string>());
            }
        }
    } else {
        ctx.error("features", "required nonempty array of names");
    }
    if (const auto it = j.find("target"); it != j.end()) {
        if (!it->is_string() || !is_identifier(it->get<std::string>())) {
            ctx.error("target", "must be an identifier");
        } else {
            c.target = it->get<std::string>();
        }
    }
    if (const auto it = j.find("seed"); it != j.end()) {
        if (it->is_number_unsigned()) {
            c.seed = it->get<std::uint64_t>();
        } else {
            ctx.error("seed", "must be a non-negative integer");
        }
    }
    size_field("batch_size", c.batch_size, 1);
    size_field("augmentation", c.augmentation, 0);
    size_field("committee_size", c.committee_size, 0);
    size_field("max_pool_points", c.max_pool_points, 1);
    if (const auto it = j.find("measure"); it != j.end()) {
        const auto m = it->is_string() ? measure_from_name(it->get<std::string>()) : std::nullopt;
        if (!m) {
            ctx.error("measure", "must be \"ibmd\" or \"cv\"");
        } else {
            c.measure = *m;
        }
    }
    if (const auto it = j.find("opset"); it != j.end()) {
        c.opset = opset_from_json(*it, "opset", ctx);
    }
    if (const auto it = j.find("evolution"); it != j.end()) {
        c.evolution = evolution_from_json(*it, "evolution", c.features, ctx);
    }
    if (const auto it = j.find("pool"); it != j.end() && it->is_object()) {
        for (auto k = it->begin(); k != it->end(); ++k) {
            if (k.key() != "controls" && k.key() != "sweeps") {
                ctx.error(join_path("pool", k.key()), "unknown field");
            }
        }
        c.pool.controls = read_axes(*it, "controls", true, ctx, c.max_pool_points);
        c.pool.sweeps = read_axes(*it, "sweeps", false, ctx, c.max_pool_points);
        if (ctx.ok()) {
            std::map<std::string, int> uses;
            for (const auto* group : {&c.pool.controls, &c.pool.sweeps}) {
                for (std::size_t i = 0; i < group->size(); ++i) {
                    const std::string p = join_path(join_path("pool", group == &c.pool.controls ? "controls" : "sweeps"), i);
                    const std::string& name = (*group)[i].name;
                    if (std::find(c.features.begin(), c.features.end(), name) == c.features.end()) {
                        ctx.error(join_path(p, "name"), "'" + name + "' is not a feature");
                    } else if (++uses[name] > 1) {
                        ctx.error(join_path(p, "name"), "'" + name + "' appears twice in the pool");
                    }
                }
            }
            for (const auto& f : c.features) {
                if (!uses.count(f)) {
                    ctx.error("pool", "feature '" + f + "' is neither a control nor a sweep");
                }
            }
            double total = 1.0;
            for (const auto* group : {&c.pool.controls, &c.pool.sweeps}) {
                for (const auto& a : *group) {
                    total *= static_cast<double>(a.values.size());
                }
            }
            if (total > static_cast<double>(c.max_pool_points)) {
                ctx.error("pool", "pool has more than max_pool_points = " + std::to_string(c.max_pool_points) +
                                      " points");
            }
        }
    } else {
        ctx.error("pool", "required object with \"controls\"");
    }
    ctx.check();
    return c;
}

Json session_config_to_json(const SessionConfig& c) {
    return {{"features", c.features},
            {"target", c.target},
            {"seed", c.seed},
            {"opset", opset_to_json(c.opset)},
            {"evolution", evolution_to_json(c.evolution, c.features)},
            {"pool", {{"controls", axes_to_json(c.pool.controls)}, {"sweeps", axes_to_json(c.pool.sweeps)}}},
            {"batch_size", c.batch_size},
            {"augmentation", c.augmentation},
            {"measure", std::string(measure_name(c.measure))},
            {"committee_size", c.committee_size},
            {"max_pool_points", c.max_pool_points}};
}

std::string_view status_name(SessionStatus s) {
    switch (s) {
        case SessionStatus::awaiting_labels: return "awaiting_labels";
        case SessionStatus::evolving: return "evolving";
        case SessionStatus::suggesting: return "suggesting";
        case SessionStatus::closed: return "closed";
    }
    return "?";
}

std::optional<SessionStatus> status_from_name(std::string_view s) {
    for (auto k : {SessionStatus::awaiting_labels, SessionStatus::evolving, SessionStatus::suggesting,
                   SessionStatus::closed}) {
        if (status_name(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

std::size_t Session::pending() const {
    return static_cast<std::size_t>(std::count_if(suggestions.begin(), suggestions.end(), [](const Suggestion& s) {
        return s.state == SuggestionState::pending;
    }));
}

// ---------------------------------------------------------------------------
// Serialization

Json session_to_json(const Session& s) {
    const SessionConfig& c = s.config;
    Json observations = Json::array();
    for (const auto& o : s.observations) {
        Json features = Json::object();
        for (std::size_t i = 0; i < c.features.size(); ++i) {
            features[c.features[i]] = o.data.features[i];
        }
        observations.push_back({{"id", o.id},
                                {"features", features},
                                {"replicates", o.data.replicates},
                                {"mean", o.data.mean()},
                                {"std", o.data.stddev()},
                                {"source", o.source},
                                {"round", o.round},
                                {"suggestion", o.suggestion ? Json(*o.suggestion) : Json()}});
    }
    Json suggestions = Json::array();
    for (const auto& g : s.suggestions) {
        Json controls = Json::object();
        for (std::size_t i = 0; i < c.pool.controls.size(); ++i) {
            controls[c.pool.controls[i].name] = g.controls[i];
        }
        suggestions.push_back({{"id", g.id},
                               {"round", g.round},
                               {"rank", g.rank},
                               {"setting", g.setting},
                               {"controls", controls},
                               {"score", optional_number(g.score)},
                               {"measure", g.measure},
                               {"state", std::string(suggestion_state_name(g.state))}});
    }
    Json fronts = Json::array();
    for (const auto& f : s.fronts) {
        Json entries = Json::array();
        for (const auto& e : f.front.entries) {
            entries.push_back({{"complexity", e.complexity}, {"loss", e.loss}, {"expression", format(e.expr, c.features)}});
        }
        Json scores = Json::array();
        for (const auto& v : f.scores) {
            scores.push_back(optional_number(v));
        }
        fronts.push_back({{"round", f.round}, {"seed", f.seed}, {"rows", f.rows}, {"entries", entries}, {"scores", scores}});
    }
    return {{"schema_version", kSessionSchemaVersion},
            {"id", s.id},
            {"status", std::string(status_name(s.status))},
            {"rounds", s.rounds()},
            {"pending_suggestions", s.pending()},
            {"last_error", s.last_error ? Json(*s.last_error) : Json()},
            {"config", session_config_to_json(c)},
            {"observations", observations},
            {"suggestions", suggestions},
            {"fronts", fronts}};
}

Session session_from_json(const Json& j) {
    if (!j.is_object() || j.value("schema_version", 0) != kSessionSchemaVersion) {
        throw std::runtime_error("unsupported session document (schema_version must be " +
                                 std::to_string(kSessionSchemaVersion) + ")");
    }
    Session s;
    s.id = j.at("id").get<std::string>();
    s.config = session_config_from_json(j.at("config"));
    const SessionConfig& c = s.config;
    const auto status = status_from_name(j.at("status").get<std::string>());
    if (!status) {
        throw std::runtime_error("unknown session status");
    }
    s.status = *status;
    if (!j.at("last_error").is_null()) {
        s.last_error = j.at("last_error").get<std::string>();
    }
    for (const auto& o : j.at("observations")) {
        LabeledObservation lo;
        lo.id = o.at("id").get<std::size_t>();
        for (const auto& f : c.features) {
            lo.data.features.push_back(o.at("features").at(f).get<double>());
        }
        lo.data.replicates = o.at("replicates").get<std::vector<double>>();
        lo.source = o.at("source").get<std::string>();
        lo.round = o.at("round").get<std::size_t>();
        if (!o.at("suggestion").is_null()) {
            lo.suggestion = o.at("suggestion").get<std::size_t>();
        }
        s.observations.push_back(std::move(lo));
    }
    for (const auto& g : j.at("suggestions")) {
        Suggestion sg;
        sg.id = g.at("id").get<std::size_t>();
        sg.round = g.at("round").get<std::size_t>();
        sg.rank = g.at("rank").get<std::size_t>();
        sg.setting = g.at("setting").get<std::size_t>();
        for (const auto& a : c.pool.controls) {
            sg.controls.push_back(g.at("controls").at(a.name).get<double>());
        }
        sg.score = number_or_null(g.at("score"));
        sg.measure = g.at("measure").get<std::string>();
        sg.state = suggestion_state_from_name(g.at("state").get<std::string>());
        s.suggestions.push_back(std::move(sg));
    }
    for (const auto& f : j.at("fronts")) {
        FrontRecord r;
        r.round = f.at("round").get<std::size_t>();
        r.seed = f.at("seed").get<std::uint64_t>();
        r.rows = f.at("rows").get<std::size_t>();
        for (const auto& e : f.at("entries")) {
            r.front.entries.push_back({e.at("complexity").get<std::size_t>(), e.at("loss").get<double>(),
                                       parse(e.at("expression").get<std::string>(), OperatorSet::all(), c.features)});
        }
        for (const auto& v : f.at("scores")) {
            r.scores.push_back(number_or_null(v));
        }
        s.fronts.push_back(std::move(r));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Operations

Session new_session(std::string id, SessionConfig config) {
    Session s;
    s.id = std::move(id);
    s.config = std::move(config);
    return s;
}

Matrix control_grid(const PoolSpec& pool) { return grid_of(pool.controls); }

Matrix sweep_grid(const PoolSpec& pool) { return grid_of(pool.sweeps); }

std::vector<std::optional<double>> score_settings(const ParetoFront& committee, const SessionConfig& c) {
    const Matrix controls = control_grid(c.pool);
    const Matrix sweeps = sweep_grid(c.pool);
    const std::size_t per = sweeps.rows();
    Matrix points(controls.rows() * per, c.features.size());
    for (std::size_t s = 0; s < controls.rows(); ++s) {
        for (std::size_t w = 0; w < per; ++w) {
            const std::size_t r = s * per + w;
            for (std::size_t k = 0; k < c.pool.controls.size(); ++k) {
                points(r, feature_index(c, c.pool.controls[k].name)) = controls(s, k);
            }
            for (std::size_t k = 0; k < c.pool.sweeps.size(); ++k) {
                points(r, feature_index(c, c.pool.sweeps[k].name)) = sweeps(w, k);
            }
        }
    }
    const DisagreementReport report = score_pool(committee, points);
    std::vector<std::optional<double>> out(controls.rows());
    for (std::size_t s = 0; s < controls.rows(); ++s) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t w = 0; w < per; ++w) {
            if (const auto v = report.points[s * per + w].score(c.measure)) {
                sum += *v;
                ++n;
            }
        }
        if (n > 0) {
            out[s] = sum / static_cast<double>(n);
        }
    }
    return out;
}

void add_observations(Session& s, const std::vector<ObservationInput>& rows, const std::string& source,
                      std::optional<std::size_t> suggestion) {
    if (s.status == SessionStatus::closed) {
        throw SessionStateError("session " + s.id + " is closed");
    }
    if (s.status == SessionStatus::evolving) {
        throw SessionStateError("session " + s.id + " is evolving; enter labels after the round completes");
    }
    JsonContext ctx;
    const SessionConfig& c = s.config;
    if (rows.empty()) {
        ctx.error("rows", "at least one observation row is required");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string p = join_path("rows", i);
        if (rows[i].features.size() != c.features.size()) {
            ctx.error(join_path(p, "features"), "expected " + std::to_string(c.features.size()) + " features");
        } else {
            for (std::size_t k = 0; k < c.features.size(); ++k) {
                if (!std::isfinite(rows[i].features[k])) {
                    ctx.error(join_path(join_path(p, "features"), c.features[k]), "must be a finite number");
                }
            }
        }
        if (rows[i].replicates.empty()) {
            ctx.error(join_path(p, "replicates"), "at least one replicate value is required");
        }
        for (std::size_t k = 0; k < rows[i].replicates.size(); ++k) {
            if (!std::isfinite(rows[i].replicates[k])) {
                ctx.error(join_path(join_path(p, "replicates"), k), "must be a finite number");
            }
        }
    }
    Suggestion* target = nullptr;
    if (suggestion) {
        if (*suggestion >= s.suggestions.size()) {
            ctx.error("suggestion", "unknown suggestion id " + std::to_string(*suggestion));
        } else if (s.suggestions[*suggestion].state != SuggestionState::pending) {
            ctx.error("suggestion", "suggestion " + std::to_string(*suggestion) + " is already " +
                                        std::string(suggestion_state_name(s.suggestions[*suggestion].state)));
        } else {
            target = &s.suggestions[*suggestion];
            for (std::size_t i = 0; ctx.ok() && i < rows.size(); ++i) {
                if (controls_of(c, rows[i].features) != target->controls) {
                    ctx.error(join_path(join_path("rows", i), "features"),
                              "controls differ from suggestion " + std::to_string(*suggestion));
                }
            }
        }
    }
    ctx.check();
    for (const auto& r : rows) {
        LabeledObservation o;
        o.id = s.observations.size();
        o.data = {r.features, r.replicates};
        o.source = source;
        o.round = s.rounds();
        o.suggestion = suggestion;
        s.observations.push_back(std::move(o));
    }
    if (target) {
        target->state = SuggestionState::labeled;
    }
    if (s.pending() == 0) {
        s.status = SessionStatus::awaiting_labels;
    }
}

void skip_suggestion(Session& s, std::size_t suggestion) {
    if (s.status == SessionStatus::closed || s.status == SessionStatus::evolving) {
        throw SessionStateError("session " + s.id + " is " + std::string(status_name(s.status)));
    }
    if (suggestion >= s.suggestions.size()) {
        throw ConfigError(std::vector<FieldError>{{"suggestion", "unknown suggestion id " + std::to_string(suggestion)}});
    }
    Suggestion& g = s.suggestions[suggestion];
    if (g.state != SuggestionState::pending) {
        throw SessionStateError("suggestion " + std::to_string(suggestion) + " is already " +
                                std::string(suggestion_state_name(g.state)));
    }
    g.state = SuggestionState::skipped;
    if (s.pending() == 0) {
        s.status = SessionStatus::awaiting_labels;
    }
}

void close_session(Session& s) {
    if (s.status == SessionStatus::evolving) {
        throw SessionStateError("session " + s.id + " is evolving");
    }
    s.status = SessionStatus::closed;
}

void check_can_advance(const Session& s) {
    if (s.status == SessionStatus::evolving) {
        throw SessionStateError("session " + s.id + " is already evolving");
    }
    if (s.status == SessionStatus::closed) {
        throw SessionStateError("session " + s.id + " is closed");
    }
    if (const std::size_t n = s.pending(); n > 0) {
        throw SessionStateError(std::to_string(n) + " suggestion(s) still pending; label or skip them first");
    }
    if (s.observations.empty()) {
        throw SessionStateError("session " + s.id + " has no labeled observations");
    }
}

Dataset training_data(const Session& s) {
    ObservationBatch batch;
    batch.feature_names = s.config.features;
    batch.target_name = s.config.target;
    for (const auto& o : s.observations) {
        batch.rows.push_back(o.data);
    }
    if (s.config.augmentation == 0) {
        return means(batch);
    }
    Rng rng = derive_rng(s.config.seed, kAugmentStream + s.rounds());
    return augment(batch, s.config.augmentation, rng);
}

AdvanceResult compute_advance(const Session& s) {
    check_can_advance(s);
    const SessionConfig& c = s.config;
    const std::size_t round = s.rounds();
    const Dataset data = training_data(s);

    EvolutionConfig evo = c.evolution;
    evo.seed = derive_seed(c.seed, kEvolveStream + round);
    const EvolutionResult result = evolve(data, evo, c.opset);

    AdvanceResult out;
    out.record.round = round;
    out.record.seed = evo.seed;
    out.record.rows = data.size();
    out.record.front = result.hall_of_fame;
    out.record.scores = score_settings(result.hall_of_fame.top_k(c.committee_size), c);

    const Matrix settings = control_grid(c.pool);
    std::set<std::vector<double>> labeled;
    for (const auto& o : s.observations) {
        labeled.insert(controls_of(c, o.data.features));
    }
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < settings.rows(); ++i) {
        if (!labeled.count(settings.row(i))) {
            open.push_back(i);
        }
    }
    std::vector<std::size_t> defined;
    std::vector<std::size_t> undefined;
    for (std::size_t i : open) {
        (out.record.scores[i] ? defined : undefined).push_back(i);
    }
    std::stable_sort(defined.begin(), defined.end(),
                     [&](std::size_t a, std::size_t b) { return *out.record.scores[a] > *out.record.scores[b]; });
    Rng rng = derive_rng(c.seed, kFallbackStream + round);
    std::shuffle(undefined.begin(), undefined.end(), rng);

    const std::size_t take = std::min(c.batch_size, open.size());
    for (std::size_t k = 0; k < take; ++k) {
        Suggestion g;
        g.id = s.suggestions.size() + k;
        g.round = round;
        g.rank = k;
        if (k < defined.size()) {
            g.setting = defined[k];
            g.score = out.record.scores[g.setting];
            g.measure = std::string(measure_name(c.measure));
        } else {
            g.setting = undefined[k - defined.size()];
            g.measure = "random";
        }
        g.controls = settings.row(g.setting);
        out.suggestions.push_back(std::move(g));
    }
    return out;
}

void apply_advance(Session& s, AdvanceResult result) {
    if (result.record.round != s.rounds()) {
        throw SessionStateError("advance result is for round " + std::to_string(result.record.round) +
                                " but the session has completed " + std::to_string(s.rounds()));
    }
    s.fronts.push_back(std::move(result.record));
    for (auto& g : result.suggestions) {
        g.id = s.suggestions.size();
        s.suggestions.push_back(std::move(g));
    }
    s.last_error.reset();
    s.status = s.pending() > 0 ? SessionStatus::suggesting : SessionStatus::awaiting_labels;
}

// ---------------------------------------------------------------------------
// Store

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(dir_)) {
        if (f.is_regular_file() && f.path().extension() == ".json") {
            files.push_back(f.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        std::ifstream in(path);
        Json j;
        try {
            j = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw std::runtime_error("corrupt session file " + path.string() + ": " + e.what());
        }
        auto e = std::make_shared<Entry>();
        e->session = session_from_json(j);
        std::ifstream log(dir_ / (e->session.id + ".events.jsonl"));
        std::string line;
        while (std::getline(log, line)) {
            ++e->events;
        }
        if (e->session.status == SessionStatus::evolving) {
            e->session.status = SessionStatus::awaiting_labels;
            e->session.last_error = "round " + std::to_string(e->session.rounds()) + " interrupted by a restart";
            persist(*e, {{"type", "recovered"}, {"round", e->session.rounds()}});
        }
        const std::string& id = e->session.id;
        if (id.size() > 1 && id[0] == 's' && std::all_of(id.begin() + 1, id.end(), ::isdigit)) {
            next_id_ = std::max(next_id_, static_cast<std::size_t>(std::stoull(id.substr(1))) + 1);
        }
        sessions_[id] = std::move(e);
    }
}

void SessionStore::persist(Entry& e, const Json& event) {
    Json line = {{"seq", e.events}};
    for (auto it = event.begin(); it != event.end(); ++it) {
        line[it.key()] = it.value();
    }
    line["status"] = std::string(status_name(e.session.status));
    append_line(dir_ / (e.session.id + ".events.jsonl"), line.dump());
    ++e.events;
    write_atomic(dir_ / (e.session.id + ".json"), session_to_json(e.session).dump(2) + "\n");
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw SessionNotFound("unknown session '" + id + "'");
    }
    return it->second;
}

Session SessionStore::create(SessionConfig config) {
    std::lock_guard lock(mutex_);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%04zu", next_id_);
    auto e = std::make_shared<Entry>();
    e->session = new_session(buf, std::move(config));
    persist(*e, {{"type", "created"}});
    ++next_id_;
    sessions_[e->session.id] = e;
    return e->session;
}

Session SessionStore::get(const std::string& id) const {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    return e->session;
}

std::vector<std::string> SessionStore::list() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, e] : sessions_) {
        out.push_back(id);
    }
    return out;
}

Session SessionStore::observe(const std::string& id, const std::vector<ObservationInput>& rows,
                              const std::string& source, std::optional<std::size_t> suggestion) {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    Session next = e->session;
    const std::size_t first = next.observations.size();
    add_observations(next, rows, source, suggestion);
    Session previous = std::move(e->session);
    e->session = std::move(next);
    try {
        persist(*e, {{"type", "observed"},
                     {"first_id", first},
                     {"count", rows.size()},
                     {"source", source},
                     {"suggestion", suggestion ? Json(*suggestion) : Json()}});
    } catch (...) {
        e->session = std::move(previous);
        throw;
    }
    return e->session;
}

Session SessionStore::skip(const std::string& id, std::size_t suggestion) {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    Session previous = e->session;
    skip_suggestion(e->session, suggestion);
    try {
        persist(*e, {{"type", "skipped"}, {"suggestion", suggestion}});
    } catch (...) {
        e->session = std::move(previous);
        throw;
    }
    return e->session;
}

Session SessionStore::close(const std::string& id) {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    Session previous = e->session;
    close_session(e->session);
    try {
        persist(*e, {{"type", "closed"}});
    } catch (...) {
        e->session = std::move(previous);
        throw;
    }
    return e->session;
}

Session SessionStore::begin_advance(const std::string& id) {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    check_can_advance(e->session);
    Session snapshot = e->session;
    e->session.status = SessionStatus::evolving;
    try {
        persist(*e, {{"type", "advance_started"}, {"round", snapshot.rounds()}});
    } catch (...) {
        e->session.status = snapshot.status;
        throw;
    }
    return snapshot;
}

Session SessionStore::finish_advance(const std::string& id, const AdvanceResult& result) {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    if (e->session.status != SessionStatus::evolving) {
        throw SessionStateError("session " + id + " is not evolving");
    }
    e->session.status = SessionStatus::awaiting_labels;
    apply_advance(e->session, result);
    Json suggested = Json::array();
    for (const auto& g : result.suggestions) {
        suggested.push_back(g.setting);
    }
    persist(*e, {{"type", "advance_completed"},
                 {"round", result.record.round},
                 {"front_size", result.record.front.size()},
                 {"suggested_settings", suggested}});
    return e->session;
}

Session SessionStore::fail_advance(const std::string& id, const std::string& error) {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    if (e->session.status != SessionStatus::evolving) {
        throw SessionStateError("session " + id + " is not evolving");
    }
    e->session.status = SessionStatus::awaiting_labels;
    e->session.last_error = error;
    persist(*e, {{"type", "advance_failed"}, {"round", e->session.rounds()}, {"error", error}});
    return e->session;
}

Session SessionStore::advance(const std::string& id) {
    const Session snapshot = begin_advance(id);
    AdvanceResult result;
    try {
        result = compute_advance(snapshot);
    } catch (const std::exception& ex) {
        return fail_advance(id, ex.what());
    }
    return finish_advance(id, result);
}

}  // namespace eqlab
