#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqlab/active.hpp"
#include "eqlab/evolution.hpp"
#include "eqlab/penalties.hpp"

namespace eqlab {

using Json = nlohmann::ordered_json;

struct FieldError {
    std::string path;  ///< e.g. "evolution.fitness.constraints[0].params.c"
    std::string message;
};

/// Validation failure naming every offending field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<FieldError> errors);
    const std::vector<FieldError>& errors() const { return errors_; }
    Json to_json() const;

private:
    std::vector<FieldError> errors_;
};

/// Collects field errors while a document is read. Every reader below appends
/// to a context instead of throwing, so one pass reports all problems.
class JsonContext {
public:
    void error(const std::string& path, const std::string& message) { errors_.push_back({path, message}); }
    bool ok() const { return errors_.empty(); }
    /// Throws ConfigError when any error was recorded.
    void check() const;

private:
    std::vector<FieldError> errors_;
};

std::string join_path(const std::string& base, const std::string& key);
std::string join_path(const std::string& base, std::size_t index);

// Readers take the value, its path, and (where variables are named) the
// feature names so that axes may be written as names or indices.

OperatorSet opset_from_json(const Json& j, const std::string& path, JsonContext& ctx);
Json opset_to_json(const OperatorSet& opset);

ConstraintSpec constraint_from_json(const Json& j, const std::string& path, std::span<const std::string> names,
                                    JsonContext& ctx);
Json constraint_to_json(const ConstraintSpec& spec);

FitnessConfig fitness_from_json(const Json& j, const std::string& path, std::span<const std::string> names,
                                JsonContext& ctx);
Json fitness_to_json(const FitnessConfig& config);

/// Missing keys keep the library defaults; unknown keys are errors.
EvolutionConfig evolution_from_json(const Json& j, const std::string& path, std::span<const std::string> names,
                                    JsonContext& ctx);
Json evolution_to_json(const EvolutionConfig& config, std::span<const std::string> names = {});

/// Benchmark spec document (see README): targets, strategies, noise levels,
/// repeats, seed and the active/evolution settings shared by every run.
BenchmarkSpec benchmark_spec_from_json(const Json& j);

}  // namespace eqlab
