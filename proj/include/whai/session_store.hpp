#pragma once

#include "whai/session.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace whai {

/// What it takes to rebuild a session besides its events.
struct SessionMeta {
    std::string session_id;
    std::filesystem::path scenario_config;
    int scenario_id = 0;
    std::uint64_t salt = 0;
    bool use_cache = true;
    std::string provider = "scripted";
    std::filesystem::path script;
    std::optional<ParentRef> parent;
    /// Number of parent events this session's log starts with.
    std::size_t prefix_events = 0;
    std::map<std::string, std::string> annotations;
};

nlohmann::json meta_json(const SessionMeta& meta);
SessionMeta meta_from_json(const nlohmann::json& j);

/// sessions/<id>/{meta.json, events.ndjson, observations.csv, ledger.json}
/// and emr/<id>.ndjson under one root. A fork's events.ndjson holds only its
/// own events; the prefix is read from the parent.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    void save(const DebugSession& session, SessionMeta meta) const;
    SessionMeta load_meta(const std::string& session_id) const;
    /// Full log: the parent's prefix (recursively) followed by the session's own events.
    std::vector<Event> load_events(const std::string& session_id) const;
    /// Re-issues the stored commands and keeps the recorded display timestamps.
    std::unique_ptr<DebugSession> restore(const std::string& session_id, std::shared_ptr<const Scenario> scenario,
                                          std::shared_ptr<const Gateway> gateway, EngineOptions options) const;
    bool exists(const std::string& session_id) const;
    std::vector<std::string> list() const;

    std::filesystem::path session_dir(const std::string& session_id) const;
    std::filesystem::path emr_path(const std::string& session_id) const;
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

/// One row per observation: agent, encounter_id, position, phase, probe_id, value, score, parse_failed.
std::string observations_csv(const std::vector<BeliefObservation>& observations);

/// RFC 4180 quoting when needed.
std::string csv_field(std::string_view value);

}  // namespace whai
