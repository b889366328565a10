#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "eqlab/active.hpp"
#include "eqlab/config.hpp"
#include "eqlab/gompertz.hpp"
#include "eqlab/server.hpp"
#include "eqlab/session.hpp"

using namespace eqlab;
namespace fs = std::filesystem;

namespace {

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

// Writes to `out` or stdout when it is empty or "-".
void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        write_file(out, text);
    }
}

std::string data_dir_or_default(const std::string& given) {
    if (!given.empty()) {
        return given;
    }
    if (const char* env = std::getenv("EQLAB_DATA_DIR"); env && *env) {
        return env;
    }
    return "eqlab-data";
}

// "a:b:step" or a comma-separated list.
std::vector<double> parse_values(const std::string& text, const std::string& option) {
    std::vector<double> out;
    const auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty()) {
            throw CLI::ValidationError(option, "'" + s + "' is not a number");
        }
        return v;
    };
    if (std::count(text.begin(), text.end(), ':') == 2) {
        const auto a = text.find(':');
        const auto b = text.find(':', a + 1);
        const double low = number(text.substr(0, a));
        const double high = number(text.substr(a + 1, b - a - 1));
        const double step = number(text.substr(b + 1));
        if (!(step > 0.0) || high < low) {
            throw CLI::ValidationError(option, "expected low:high:step with step > 0 and high >= low");
        }
        const auto n = static_cast<std::size_t>(std::floor((high - low) / step + 1e-9)) + 1;
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(low + static_cast<double>(i) * step);
        }
        return out;
    }
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        out.push_back(number(item));
    }
    if (out.empty()) {
        throw CLI::ValidationError(option, "no values given");
    }
    return out;
}

std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::string front_csv(const ParetoFront& front, std::span<const std::string> names) {
    std::string out = "complexity,loss,expression\n";
    for (const auto& e : front.entries) {
        out += std::to_string(e.complexity) + "," + format_number(e.loss) + ",\"" + format(e.expr, names) + "\"\n";
    }
    return out;
}

std::string suggestions_csv(const Session& s, bool all) {
    std::string out = "id,round,rank,setting";
    for (const auto& a : s.config.pool.controls) {
        out += "," + a.name;
    }
    out += ",score,measure,state\n";
    const Json doc = session_to_json(s);
    for (std::size_t i = 0; i < s.suggestions.size(); ++i) {
        const Suggestion& g = s.suggestions[i];
        if (!all && (s.rounds() == 0 || g.round != s.rounds() - 1)) {
            continue;
        }
        out += std::to_string(g.id) + "," + std::to_string(g.round) + "," + std::to_string(g.rank) + "," +
               std::to_string(g.setting);
        for (double v : g.controls) {
            out += "," + format_number(v);
        }
        out += "," + (g.score ? format_number(*g.score) : std::string()) + "," + g.measure + "," +
               doc["suggestions"][i]["state"].get<std::string>() + "\n";
    }
    return out;
}

std::string growth_csv(const GrowthFit& fit) {
    std::string out = "c,flags,plateaued,capacity,inflection,tangent_lag,rate,A_fit,Tl_fit,kg_fit,A_true,Tl_true,kg_true\n";
    const GompertzParams truth;
    // Blank when too few rows extracted cleanly for that fit.
    const auto fitted = [](bool ok, double v) { return ok ? format_number(v) : std::string(); };
    for (const auto& r : fit.rows) {
        const double c = r.concentration;
        out += format_number(c) + "," + growth_flag_names(r.flags) + "," + (r.plateaued ? "1" : "0") + "," +
               format_number(r.capacity) + "," + format_number(r.inflection) + "," + format_number(r.tangent_lag) +
               "," + format_number(r.rate) + "," + fitted(fit.capacity_fitted, fit.params.capacity(c)) + "," +
               fitted(fit.lag_fitted, fit.params.lag(c)) + "," + fitted(fit.rate_fitted, fit.params.rate(c)) + "," +
               format_number(truth.capacity(c)) + "," + format_number(truth.lag(c)) + "," +
               format_number(truth.rate(c)) + "\n";
    }
    return out;
}

void print_summary(const Session& s) { std::cout << session_summary_json(s).dump(2) << "\n"; }

// ---------------------------------------------------------------------------

struct RunArgs {
    std::string data;
    std::string features;
    std::string target = "y";
    std::string builtin;
    std::size_t points = 50;
    std::string config;
    std::size_t augment = 0;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> iterations;
    std::string out = "run-out";
};

// One-shot symbolic regression on a CSV or on samples of a built-in target.
int cmd_run(const RunArgs& a) {
    OperatorSet opset = OperatorSet::defaults();
    Dataset data;
    std::uint64_t seed = a.seed.value_or(0);
    if (!a.builtin.empty()) {
        const auto truth = find_target(a.builtin);
        if (!truth) {
            throw std::runtime_error("unknown built-in target '" + a.builtin + "'");
        }
        Rng rng = derive_rng(seed, 1);
        data.x = truth->sample(a.points, rng);
        data.y = truth->label(data.x);
        data.names = truth->names();
    } else {
        if (a.data.empty() || a.features.empty()) {
            throw std::runtime_error("run needs --data with --features, or --builtin");
        }
        const ObservationBatch batch = ingest_csv_file(a.data, {split_names(a.features), a.target});
        if (a.augment > 0) {
            Rng rng = derive_rng(seed, 100);
            data = augment(batch, a.augment, rng);
        } else {
            data = means(batch);
        }
    }
    EvolutionConfig evo;
    if (!a.config.empty()) {
        const Json j = read_json_file(a.config);
        JsonContext ctx;
        if (!j.is_object()) {
            ctx.error("", "must be an object with \"opset\" and/or \"evolution\"");
        } else {
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (it.key() == "opset") {
                    opset = opset_from_json(it.value(), "opset", ctx);
                } else if (it.key() == "evolution") {
                    evo = evolution_from_json(it.value(), "evolution", data.names, ctx);
                } else {
                    ctx.error(it.key(), "unknown field");
                }
            }
        }
        ctx.check();
    }
    if (a.seed) {
        evo.seed = *a.seed;
    }
    if (a.iterations) {
        evo.iterations = *a.iterations;
    }
    const EvolutionResult result = evolve(data, evo, opset);
    const fs::path out = a.out;
    write_file(out / "front.csv", front_csv(result.hall_of_fame, data.names));
    write_file(out / "trace.csv", trace_csv(result.trace));
    if (!evo.census_patterns.empty()) {
        write_file(out / "census.csv", census_csv(result.census, evo.census_patterns, data.names));
    }
    Json front = Json::array();
    for (const auto& e : result.hall_of_fame.entries) {
        front.push_back({{"complexity", e.complexity}, {"loss", e.loss}, {"expression", format(e.expr, data.names)}});
    }
    write_file(out / "front.json", Json({{"features", data.names},
                                         {"rows", data.size()},
                                         {"seed", evo.seed},
                                         {"opset", opset_to_json(opset)},
                                         {"evolution", evolution_to_json(evo, data.names)},
                                         {"front", front}})
                                       .dump(2) +
                                       "\n");
    std::cout << front_csv(result.hall_of_fame, data.names);
    return 0;
}

int cmd_bench(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed) {
    Json j = read_json_file(spec_path);
    if (seed && j.is_object()) {
        j["seed"] = *seed;
    }
    const BenchmarkSpec spec = benchmark_spec_from_json(j);
    const BenchmarkResult result = run_benchmark(spec);
    const fs::path dir = out;
    write_file(dir / "runs.csv", runs_csv(result));
    write_file(dir / "summary.csv", summary_csv(result));
    write_file(dir / "summary.json", summary_json(result));
    std::cout << summary_csv(result);
    return 0;
}

int cmd_serve(const std::string& data_dir, const std::string& host, int port, const std::string& static_dir) {
    // Block the stop signals here so that every thread inherits the mask and
    // only the waiter below receives them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    SessionStore store(data_dir_or_default(data_dir));
    ServerOptions options{host, port, std::nullopt};
    if (!static_dir.empty()) {
        options.static_dir = static_dir;
    }
    Server server(store, options);
    const int bound = server.bind();
    std::cerr << "eqlab: serving " << store.dir().string() << " on http://" << host << ":" << bound << "\n";
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&stop_signals, &sig);
        server.stop();
    });
    server.run();
    // run() also returns when the listener fails; wake the waiter either way.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    server.wait_idle();
    return 0;
}

int cmd_synth(const std::string& out, const std::string& times, const std::string& concentrations,
              std::size_t replicates, double noise, std::uint64_t seed) {
    SynthOptions o = default_synth_options();
    if (!times.empty()) {
        o.times = parse_values(times, "--times");
    }
    if (!concentrations.empty()) {
        o.concentrations = parse_values(concentrations, "--concentrations");
    }
    o.replicates = replicates;
    o.noise = noise;
    Rng rng = derive_rng(seed, 2);
    const ObservationBatch batch = synth_gompertz(GompertzParams{}, o, rng);
    std::string csv = "t,c";
    for (std::size_t k = 0; k < replicates; ++k) {
        csv += ",od_" + std::to_string(k + 1);
    }
    csv += "\n";
    for (const auto& r : batch.rows) {
        csv += format_number(r.features[0]) + "," + format_number(r.features[1]);
        for (double v : r.replicates) {
            csv += "," + format_number(v);
        }
        csv += "\n";
    }
    emit(out, csv);
    return 0;
}

int cmd_fit_growth(const std::string& expression, const std::string& concentrations, const std::string& out) {
    const std::vector<std::string> names = {"t", "c"};
    const Expression e = parse(expression, OperatorSet::all(), names);
    const GrowthFit fit = fit_growth_params(e, parse_values(concentrations, "--concentrations"));
    emit(out, growth_csv(fit));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"eqlab: active-learning symbolic regression workbench"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "one-shot symbolic regression");
    run_cmd->add_option("--data", run.data, "observations CSV");
    run_cmd->add_option("--features", run.features, "comma-separated feature columns");
    run_cmd->add_option("--target", run.target, "target column (replicates as <target>_<n>)");
    run_cmd->add_option("--builtin", run.builtin, "sample a built-in target instead of reading a CSV");
    run_cmd->add_option("--points", run.points, "points sampled from --builtin")->check(CLI::PositiveNumber);
    run_cmd->add_option("--config", run.config, "JSON with \"opset\" and \"evolution\"");
    run_cmd->add_option("--augment", run.augment, "Gaussian draws per observation (0 = replicate means)");
    run_cmd->add_option("--seed", run.seed, "random seed");
    run_cmd->add_option("--iterations", run.iterations, "override evolution iterations");
    run_cmd->add_option("--out", run.out, "output directory");

    std::string bench_spec;
    std::string bench_out = "bench-out";
    std::optional<std::uint64_t> bench_seed;
    auto* bench_cmd = app.add_subcommand("bench", "run a benchmark spec");
    bench_cmd->add_option("--spec", bench_spec, "benchmark spec JSON")->required();
    bench_cmd->add_option("--out", bench_out, "output directory");
    bench_cmd->add_option("--seed", bench_seed, "override the spec seed");

    std::string data_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON API");
    serve_cmd->add_option("--data-dir", data_dir, "session directory (default $EQLAB_DATA_DIR or ./eqlab-data)");
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "port (0 = any free port)");
    serve_cmd->add_option("--static-dir", static_dir, "serve static files (console bundle) under /");

    auto* session_cmd = app.add_subcommand("session", "offline session operations");
    session_cmd->require_subcommand(1);
    session_cmd->add_option("--data-dir", data_dir, "session directory (default $EQLAB_DATA_DIR or ./eqlab-data)");

    std::string create_config;
    std::optional<std::uint64_t> create_seed;
    auto* create_cmd = session_cmd->add_subcommand("create", "create a session from a config JSON");
    create_cmd->add_option("--config", create_config, "session config JSON")->required();
    create_cmd->add_option("--seed", create_seed, "override the config seed");

    std::string session_id;
    std::string observe_csv;
    std::optional<std::size_t> observe_suggestion;
    auto* observe_cmd = session_cmd->add_subcommand("observe", "add labels from a CSV");
    observe_cmd->add_option("id", session_id, "session id")->required();
    observe_cmd->add_option("--csv", observe_csv, "observations CSV (feature columns + replicate columns)")->required();
    observe_cmd->add_option("--suggestion", observe_suggestion, "suggestion these rows label");

    auto* advance_cmd = session_cmd->add_subcommand("advance", "run one round and print suggestions");
    advance_cmd->add_option("id", session_id, "session id")->required();

    std::size_t skip_id = 0;
    auto* skip_cmd = session_cmd->add_subcommand("skip", "skip a pending suggestion");
    skip_cmd->add_option("id", session_id, "session id")->required();
    skip_cmd->add_option("suggestion", skip_id, "suggestion id")->required();

    auto* close_cmd = session_cmd->add_subcommand("close", "close a session");
    close_cmd->add_option("id", session_id, "session id")->required();

    auto* list_cmd = session_cmd->add_subcommand("list", "list sessions");

    std::string export_what = "session";
    std::string export_out;
    std::optional<std::size_t> export_round;
    auto* export_cmd = session_cmd->add_subcommand("export", "write session state");
    export_cmd->add_option("id", session_id, "session id")->required();
    export_cmd->add_option("--what", export_what, "session | front | disagreement | suggestions | suggestions-csv")
        ->check(CLI::IsMember({"session", "front", "disagreement", "suggestions", "suggestions-csv"}));
    export_cmd->add_option("--round", export_round, "round for front/disagreement (default latest)");
    export_cmd->add_option("--out", export_out, "output file (default stdout)");

    std::string synth_out;
    std::string synth_times;
    std::string synth_conc;
    std::size_t synth_reps = 3;
    double synth_noise = 0.0;
    std::uint64_t synth_seed = 0;
    auto* synth_cmd = app.add_subcommand("synth-gompertz", "synthetic growth observations as CSV");
    synth_cmd->add_option("--out", synth_out, "output CSV (default stdout)");
    synth_cmd->add_option("--times", synth_times, "low:high:step or list (default 0:5000:200)");
    synth_cmd->add_option("--concentrations", synth_conc, "low:high:step or list (default 0:100:10)");
    synth_cmd->add_option("--replicates", synth_reps, "replicates per setting")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--noise", synth_noise, "absolute noise standard deviation")->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--seed", synth_seed, "random seed");

    std::string fit_expr;
    std::string fit_conc = "5:95:5";
    std::string fit_out;
    auto* fit_cmd = app.add_subcommand("fit-growth", "extract and fit growth parameters from a y(t, c) expression");
    fit_cmd->add_option("--expression", fit_expr, "expression over t and c")->required();
    fit_cmd->add_option("--concentrations", fit_conc, "low:high:step or list");
    fit_cmd->add_option("--out", fit_out, "output CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            return cmd_run(run);
        }
        if (*bench_cmd) {
            return cmd_bench(bench_spec, bench_out, bench_seed);
        }
        if (*serve_cmd) {
            return cmd_serve(data_dir, host, port, static_dir);
        }
        if (*synth_cmd) {
            return cmd_synth(synth_out, synth_times, synth_conc, synth_reps, synth_noise, synth_seed);
        }
        if (*fit_cmd) {
            return cmd_fit_growth(fit_expr, fit_conc, fit_out);
        }
        SessionStore store(data_dir_or_default(data_dir));
        if (*create_cmd) {
            Json j = read_json_file(create_config);
            if (create_seed && j.is_object()) {
                j["seed"] = *create_seed;
            }
            const Session s = store.create(session_config_from_json(j));
            std::cout << s.id << "\n";
        } else if (*observe_cmd) {
            const Session current = store.get(session_id);
            const ObservationBatch batch =
                ingest_csv_file(observe_csv, {current.config.features, current.config.target});
            std::vector<ObservationInput> rows;
            for (const auto& r : batch.rows) {
                rows.push_back({r.features, r.replicates});
            }
            print_summary(store.observe(session_id, rows, "csv:" + fs::path(observe_csv).filename().string(),
                                        observe_suggestion));
        } else if (*advance_cmd) {
            const Session s = store.advance(session_id);
            if (s.last_error) {
                std::cerr << "eqlab: round failed: " << *s.last_error << "\n";
                return 1;
            }
            std::cout << suggestions_csv(s, false);
        } else if (*skip_cmd) {
            print_summary(store.skip(session_id, skip_id));
        } else if (*close_cmd) {
            print_summary(store.close(session_id));
        } else if (*list_cmd) {
            for (const auto& id : store.list()) {
                std::cout << session_summary_json(store.get(id)).dump() << "\n";
            }
        } else if (*export_cmd) {
            const Session s = store.get(session_id);
            std::string text;
            if (export_what == "session") {
                text = session_to_json(s).dump(2) + "\n";
            } else if (export_what == "front") {
                text = front_json(s, export_round).dump(2) + "\n";
            } else if (export_what == "disagreement") {
                text = disagreement_json(s, export_round).dump(2) + "\n";
            } else if (export_what == "suggestions") {
                text = suggestions_json(s, true).dump(2) + "\n";
            } else {
                text = suggestions_csv(s, true);
            }
            emit(export_out, text);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "eqlab: " << e.what() << "\n";
        return 2;
    } catch (const IngestError& e) {
        std::cerr << "eqlab: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "eqlab: " << e.what() << "\n";
        return 1;
    }
}
