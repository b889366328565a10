#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqlab/config.hpp"
#include "eqlab/evolution.hpp"
#include "eqlab/observations.hpp"
#include "eqlab/pareto.hpp"

namespace eqlab {

inline constexpr int kSessionSchemaVersion = 1;

/// One axis of the candidate-experiment grid: explicit values, or low..high by step.
struct PoolAxis {
    std::string name;
    std::vector<double> values;
};

/// Controls are the settings an experiment chooses (one suggestion per grid
/// point); sweeps are variables measured across within every experiment
/// (e.g. time). A setting's disagreement is the mean over its sweep points.
struct PoolSpec {
    std::vector<PoolAxis> controls;
    std::vector<PoolAxis> sweeps;
};

struct SessionConfig {
    std::vector<std::string> features;
    std::string target = "y";
    std::uint64_t seed = 0;
    OperatorSet opset = OperatorSet::defaults();
    EvolutionConfig evolution;
    PoolSpec pool;
    std::size_t batch_size = 11;
    std::size_t augmentation = 10;  ///< draws per observation; 0 = replicate means
    Measure measure = Measure::ibmd;
    std::size_t committee_size = 0;  ///< 0 = whole front
    std::size_t max_pool_points = 200000;
};

/// Throws ConfigError naming each offending field.
SessionConfig session_config_from_json(const Json& j);
Json session_config_to_json(const SessionConfig& config);

enum class SessionStatus { awaiting_labels, evolving, suggesting, closed };
std::string_view status_name(SessionStatus s);
std::optional<SessionStatus> status_from_name(std::string_view s);

enum class SuggestionState { pending, labeled, skipped };

struct LabeledObservation {
    std::size_t id = 0;
    Observation data;
    std::string source;  ///< "api", "csv:<file>#<row>", ...
    std::size_t round = 0;  ///< rounds completed when it was entered
    std::optional<std::size_t> suggestion;
};

struct Suggestion {
    std::size_t id = 0;
    std::size_t round = 0;
    std::size_t rank = 0;
    std::size_t setting = 0;             ///< index into the control grid
    std::vector<double> controls;        ///< control values of that grid point
    std::optional<double> score;         ///< absent when picked at random
    std::string measure;                 ///< "ibmd", "cv" or "random"
    SuggestionState state = SuggestionState::pending;
};

struct FrontRecord {
    std::size_t round = 0;
    std::uint64_t seed = 0;
    std::size_t rows = 0;  ///< training rows after augmentation
    ParetoFront front;
    std::vector<std::optional<double>> scores;  ///< per control setting
};

struct Session {
    std::string id;
    SessionConfig config;
    SessionStatus status = SessionStatus::awaiting_labels;
    std::vector<LabeledObservation> observations;
    std::vector<Suggestion> suggestions;
    std::vector<FrontRecord> fronts;
    std::optional<std::string> last_error;
    std::size_t rounds() const { return fronts.size(); }
    std::size_t pending() const;
};

Json session_to_json(const Session& s);
Session session_from_json(const Json& j);

/// Wrong status or unmet precondition (maps to HTTP 409).
class SessionStateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SessionNotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Pure session operations.

Session new_session(std::string id, SessionConfig config);

/// Control grid, one row per setting (cartesian product, first axis slowest).
Matrix control_grid(const PoolSpec& pool);
/// Sweep grid, one row per point; a single empty row when there are no sweeps.
Matrix sweep_grid(const PoolSpec& pool);

/// Mean disagreement over each setting's sweep points; absent when no sweep
/// point has two valid committee predictions.
std::vector<std::optional<double>> score_settings(const ParetoFront& committee, const SessionConfig& config);

struct ObservationInput {
    std::vector<double> features;
    std::vector<double> replicates;
};

/// Appends rows (validated as a whole; ConfigError names `rows[i]...`). A
/// suggestion id marks that suggestion labeled.
void add_observations(Session& s, const std::vector<ObservationInput>& rows, const std::string& source,
                      std::optional<std::size_t> suggestion);
void skip_suggestion(Session& s, std::size_t suggestion);
void close_session(Session& s);

/// Throws SessionStateError unless the session may start a round.
void check_can_advance(const Session& s);

/// Training rows for the next round: augmented draws seeded per (session seed, round).
Dataset training_data(const Session& s);

struct AdvanceResult {
    FrontRecord record;
    std::vector<Suggestion> suggestions;
};

/// Evolves on the training data and ranks the pool. Depends only on the session
/// state, so equal states give equal results.
AdvanceResult compute_advance(const Session& s);
void apply_advance(Session& s, AdvanceResult result);

// ---------------------------------------------------------------------------
// Persistent store: one JSON document per session plus an append-only event log.

class SessionStore {
public:
    /// Loads every session under `dir`. A session left `evolving` by a crash is
    /// returned to its previous status with last_error set.
    explicit SessionStore(std::filesystem::path dir);

    Session create(SessionConfig config);
    Session get(const std::string& id) const;
    std::vector<std::string> list() const;

    Session observe(const std::string& id, const std::vector<ObservationInput>& rows, const std::string& source,
                    std::optional<std::size_t> suggestion);
    Session skip(const std::string& id, std::size_t suggestion);
    Session close(const std::string& id);

    /// Marks the session evolving (persisted) and returns the snapshot to evolve on.
    Session begin_advance(const std::string& id);
    /// Stores the outcome of a round started by begin_advance.
    Session finish_advance(const std::string& id, const AdvanceResult& result);
    Session fail_advance(const std::string& id, const std::string& error);
    /// begin, compute and finish in the calling thread.
    Session advance(const std::string& id);

    const std::filesystem::path& dir() const { return dir_; }

private:
    struct Entry {
        mutable std::mutex mutex;
        Session session;
        std::size_t events = 0;
    };

    std::shared_ptr<Entry> entry(const std::string& id) const;
    void persist(Entry& e, const Json& event);

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::size_t next_id_ = 1;
};

}  // namespace eqlab
