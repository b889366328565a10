#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "eqlab/session.hpp"

namespace eqlab {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  ///< 0 = pick a free port
    /// Static files (e.g. a built console bundle) served under /.
    std::optional<std::filesystem::path> static_dir;
};

/// Parses the body of POST /sessions/{id}/observations. Feature values may be an
/// object keyed by feature name or an array in feature order.
struct ObservationRequest {
    std::vector<ObservationInput> rows;
    std::optional<std::size_t> suggestion;
};
ObservationRequest observation_request_from_json(const Json& j, const std::vector<std::string>& features);

/// Views served by the API, all cut from session_to_json so that every number
/// matches the stored document.
Json session_summary_json(const Session& s);
/// Latest round when `round` is empty. Throws std::out_of_range for an unknown round.
Json front_json(const Session& s, std::optional<std::size_t> round);
Json disagreement_json(const Session& s, std::optional<std::size_t> round);
/// Suggestions of the latest round, or of every round with `all`.
Json suggestions_json(const Session& s, bool all);

/// HTTP JSON API over a SessionStore. Advances run on worker threads; the
/// client polls GET /sessions/{id} for the status.
class Server {
public:
    Server(SessionStore& store, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and returns the port (useful with port 0). Throws on failure.
    int bind();
    /// Serves until stop(); call bind() first.
    void run();
    void stop();
    /// Blocks until no advance is running.
    void wait_idle();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace eqlab
