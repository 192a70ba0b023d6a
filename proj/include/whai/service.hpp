#pragma once

#include "whai/session.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace whai {

struct ServiceOptions {
    /// Store root: sessions/, emr/, experiments/.
    std::filesystem::path root;
    std::filesystem::path cache_dir;
    /// Used when a create request names no scenario.
    std::filesystem::path default_scenario;
    std::optional<int> default_scenario_id;
    std::string provider = "scripted";
    std::filesystem::path script;
};

/// HTTP+JSON debugger service under /api/v1 with a server-sent event stream
/// per session. Commands on one session are serialized; a command arriving
/// while another runs gets 409.
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds without serving. Port 0 picks a free port; returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool run();
    void stop();

    /// Live session by id, restoring it from the store when needed; null when unknown.
    std::shared_ptr<DebugSession> find(const std::string& session_id);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Status code for an exception escaping a handler.
int http_status_for(const std::exception& e);

}  // namespace whai
