#include "eqlab/server.hpp"

#include <charconv>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

#include <httplib.h>

namespace eqlab {

namespace {

constexpr const char* kJson = "application/json";

void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

Json error_body(const std::string& message) { return {{"error", message}}; }

Json parse_body(const httplib::Request& req) {
    try {
        return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::vector<FieldError>{{"", std::string("invalid JSON: ") + e.what()}});
    }
}

std::optional<std::size_t> size_param(const httplib::Request& req, const std::string& name) {
    if (!req.has_param(name)) {
        return std::nullopt;
    }
    const std::string v = req.get_param_value(name);
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(std::vector<FieldError>{{name, "must be a non-negative integer"}});
    }
    return out;
}

std::size_t path_index(const httplib::Request& req, const std::string& name) {
    const std::string& v = req.path_params.at(name);
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(std::vector<FieldError>{{name, "must be a non-negative integer"}});
    }
    return out;
}

std::size_t pick_round(const Session& s, std::optional<std::size_t> round) {
    if (s.fronts.empty()) {
        throw std::out_of_range("session " + s.id + " has no completed rounds");
    }
    const std::size_t r = round.value_or(s.rounds() - 1);
    if (r >= s.rounds()) {
        throw std::out_of_range("round " + std::to_string(r) + " has not been completed");
    }
    return r;
}

}  // namespace

ObservationRequest observation_request_from_json(const Json& j, const std::vector<std::string>& features) {
    JsonContext ctx;
    ObservationRequest out;
    if (!j.is_object()) {
        ctx.error("", "must be an object with \"rows\"");
        ctx.check();
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "rows" && it.key() != "suggestion") {
            ctx.error(it.key(), "unknown field");
        }
    }
    if (const auto s = j.find("suggestion"); s != j.end() && !s->is_null()) {
        if (!s->is_number_unsigned()) {
            ctx.error("suggestion", "must be a suggestion id");
        } else {
            out.suggestion = s->get<std::size_t>();
        }
    }
    const auto rows = j.find("rows");
    if (rows == j.end() || !rows->is_array() || rows->empty()) {
        ctx.error("rows", "required nonempty array");
        ctx.check();
    }
    for (std::size_t i = 0; i < rows->size(); ++i) {
        const std::string p = join_path("rows", i);
        const Json& r = (*rows)[i];
        if (!r.is_object()) {
            ctx.error(p, "must be an object with \"features\" and \"replicates\"");
            continue;
        }
        for (auto it = r.begin(); it != r.end(); ++it) {
            if (it.key() != "features" && it.key() != "replicates") {
                ctx.error(join_path(p, it.key()), "unknown field");
            }
        }
        ObservationInput row;
        const auto f = r.find("features");
        const std::string fp = join_path(p, "features");
        if (f == r.end()) {
            ctx.error(fp, "required");
        } else if (f->is_object()) {
            for (auto it = f->begin(); it != f->end(); ++it) {
                if (std::find(features.begin(), features.end(), it.key()) == features.end()) {
                    ctx.error(join_path(fp, it.key()), "not a feature of this session");
                }
            }
            for (const auto& name : features) {
                const auto v = f->find(name);
                if (v == f->end()) {
                    ctx.error(join_path(fp, name), "required");
                } else if (!v->is_number()) {
                    ctx.error(join_path(fp, name), "must be a number");
                } else {
                    row.features.push_back(v->get<double>());
                }
            }
        } else if (f->is_array()) {
            if (f->size() != features.size()) {
                ctx.error(fp, "expected " + std::to_string(features.size()) + " values");
            }
            for (std::size_t k = 0; k < f->size(); ++k) {
                if (!(*f)[k].is_number()) {
                    ctx.error(join_path(fp, k), "must be a number");
                } else {
                    row.features.push_back((*f)[k].get<double>());
                }
            }
        } else {
            ctx.error(fp, "must be an object keyed by feature name or an array");
        }
        const auto reps = r.find("replicates");
        const std::string rp = join_path(p, "replicates");
        if (reps == r.end() || !reps->is_array() || reps->empty()) {
            ctx.error(rp, "required nonempty array of numbers");
        } else {
            for (std::size_t k = 0; k < reps->size(); ++k) {
                if (!(*reps)[k].is_number()) {
                    ctx.error(join_path(rp, k), "must be a number");
                } else {
                    row.replicates.push_back((*reps)[k].get<double>());
                }
            }
        }
        out.rows.push_back(std::move(row));
    }
    ctx.check();
    return out;
}

Json session_summary_json(const Session& s) {
    return {{"id", s.id},
            {"status", std::string(status_name(s.status))},
            {"rounds", s.rounds()},
            {"observations", s.observations.size()},
            {"pending_suggestions", s.pending()},
            {"last_error", s.last_error ? Json(*s.last_error) : Json()}};
}

Json front_json(const Session& s, std::optional<std::size_t> round) {
    const std::size_t r = pick_round(s, round);
    Json f = session_to_json(s)["fronts"][r];
    f.erase("scores");
    return f;
}

Json disagreement_json(const Session& s, std::optional<std::size_t> round) {
    const std::size_t r = pick_round(s, round);
    const Json doc = session_to_json(s);
    const Matrix grid = control_grid(s.config.pool);
    Json points = Json::array();
    for (std::size_t i = 0; i < grid.rows(); ++i) {
        Json controls = Json::object();
        for (std::size_t k = 0; k < s.config.pool.controls.size(); ++k) {
            controls[s.config.pool.controls[k].name] = grid(i, k);
        }
        points.push_back({{"setting", i}, {"controls", controls}, {"score", doc["fronts"][r]["scores"][i]}});
    }
    Json suggested = Json::array();
    for (const auto& g : s.suggestions) {
        if (g.round == r) {
            suggested.push_back(g.setting);
        }
    }
    return {{"round", r},
            {"measure", std::string(measure_name(s.config.measure))},
            {"suggested", suggested},
            {"points", points}};
}

Json suggestions_json(const Session& s, bool all) {
    const Json doc = session_to_json(s);
    Json out = Json::array();
    for (std::size_t i = 0; i < s.suggestions.size(); ++i) {
        if (all || (s.rounds() > 0 && s.suggestions[i].round == s.rounds() - 1)) {
            out.push_back(doc["suggestions"][i]);
        }
    }
    return {{"round", s.rounds() > 0 ? Json(s.rounds() - 1) : Json()}, {"suggestions", out}};
}

struct Server::Impl {
    SessionStore& store;
    ServerOptions options;
    httplib::Server http;
    int port = -1;

    std::mutex jobs_mutex;
    std::condition_variable jobs_done;
    std::vector<std::thread> workers;
    std::size_t running = 0;

    Impl(SessionStore& s, ServerOptions o) : store(s), options(std::move(o)) {}

    // Maps library exceptions to status codes.
    template <typename F>
    httplib::Server::Handler wrap(F&& f) {
        return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const ConfigError& e) {
                send(res, 400, e.to_json());
            } catch (const SessionNotFound& e) {
                send(res, 404, error_body(e.what()));
            } catch (const std::out_of_range& e) {
                send(res, 404, error_body(e.what()));
            } catch (const SessionStateError& e) {
                send(res, 409, error_body(e.what()));
            } catch (const std::exception& e) {
                send(res, 500, error_body(e.what()));
            }
        };
    }

    void start_advance(const std::string& id) {
        Session snapshot = store.begin_advance(id);
        std::lock_guard lock(jobs_mutex);
        ++running;
        workers.emplace_back([this, id, snapshot = std::move(snapshot)] {
            try {
                std::optional<AdvanceResult> result;
                std::string error;
                try {
                    result = compute_advance(snapshot);
                } catch (const std::exception& e) {
                    error = e.what();
                }
                if (result) {
                    store.finish_advance(id, *result);
                } else {
                    store.fail_advance(id, error);
                }
            } catch (...) {
                // The outcome could not be persisted; the session stays
                // evolving on disk and is recovered on the next start.
            }
            std::lock_guard done(jobs_mutex);
            --running;
            jobs_done.notify_all();
        });
    }

    void routes() {
        http.Get("/healthz", wrap([this](const httplib::Request&, httplib::Response& res) {
            send(res, 200, {{"status", "ok"}, {"sessions", store.list().size()}});
        }));
        http.Post("/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const Session s = store.create(session_config_from_json(parse_body(req)));
            res.set_header("Location", "/sessions/" + s.id);
            send(res, 201, session_to_json(s));
        }));
        http.Get("/sessions", wrap([this](const httplib::Request&, httplib::Response& res) {
            Json list = Json::array();
            for (const auto& id : store.list()) {
                list.push_back(session_summary_json(store.get(id)));
            }
            send(res, 200, {{"sessions", list}});
        }));
        http.Get("/sessions/:id", wrap([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, session_to_json(store.get(req.path_params.at("id"))));
        }));
        http.Post("/sessions/:id/observations", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.path_params.at("id");
            const Session current = store.get(id);
            const Json body = parse_body(req);
            const ObservationRequest obs = observation_request_from_json(body, current.config.features);
            const std::size_t first = current.observations.size();
            const Session s = store.observe(id, obs.rows, "api", obs.suggestion);
            const Json doc = session_to_json(s);
            Json added = Json::array();
            for (std::size_t i = first; i < s.observations.size(); ++i) {
                added.push_back(doc["observations"][i]);
            }
            send(res, 201, {{"session", session_summary_json(s)}, {"observations", added}});
        }));
        http.Post("/sessions/:id/suggestions/:sid/skip",
                  wrap([this](const httplib::Request& req, httplib::Response& res) {
                      const std::size_t sid = path_index(req, "sid");
                      const Session s = store.skip(req.path_params.at("id"), sid);
                      send(res, 200, {{"session", session_summary_json(s)},
                                      {"suggestion", session_to_json(s)["suggestions"][sid]}});
                  }));
        http.Post("/sessions/:id/advance", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.path_params.at("id");
            start_advance(id);
            res.set_header("Location", "/sessions/" + id);
            send(res, 202, session_summary_json(store.get(id)));
        }));
        http.Post("/sessions/:id/close", wrap([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, session_summary_json(store.close(req.path_params.at("id"))));
        }));
        http.Get("/sessions/:id/front", wrap([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, front_json(store.get(req.path_params.at("id")), size_param(req, "round")));
        }));
        http.Get("/sessions/:id/disagreement", wrap([this](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, disagreement_json(store.get(req.path_params.at("id")), size_param(req, "round")));
        }));
        http.Get("/sessions/:id/suggestions", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const bool all = req.has_param("all") && req.get_param_value("all") != "false" &&
                             req.get_param_value("all") != "0";
            send(res, 200, suggestions_json(store.get(req.path_params.at("id")), all));
        }));
        if (options.static_dir) {
            if (!http.set_mount_point("/", options.static_dir->string())) {
                throw std::runtime_error("static directory not found: " + options.static_dir->string());
            }
        }
    }

    void join_workers() {
        std::vector<std::thread> done;
        {
            std::unique_lock lock(jobs_mutex);
            jobs_done.wait(lock, [this] { return running == 0; });
            done.swap(workers);
        }
        for (auto& t : done) {
            t.join();
        }
    }
};

Server::Server(SessionStore& store, ServerOptions options) : impl_(std::make_unique<Impl>(store, std::move(options))) {
    impl_->routes();
}

Server::~Server() {
    stop();
    wait_idle();
}

int Server::bind() {
    const int port = impl_->options.port == 0 ? impl_->http.bind_to_any_port(impl_->options.host)
                                              : (impl_->http.bind_to_port(impl_->options.host, impl_->options.port)
                                                     ? impl_->options.port
                                                     : -1);
    if (port < 0) {
        throw std::runtime_error("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
    }
    impl_->port = port;
    return port;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

void Server::wait_idle() { impl_->join_workers(); }

}  // namespace eqlab
