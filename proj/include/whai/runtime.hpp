#pragma once

#include "whai/gateway.hpp"
#include "whai/scenario.hpp"
#include "whai/session_store.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace whai {

/// Provider selection shared by the CLI and the service.
struct ProviderChoice {
    /// "scripted" or "live".
    std::string kind = "scripted";
    /// Scripted rule file; empty uses the scenario's scripted_responses_path.
    std::filesystem::path script;
    std::filesystem::path cache_dir;
};

/// Builds a gateway over the chosen provider, the cache at `cache_dir`, and
/// the scenario's prices overlaid with WHAI_PRICE_TABLE.
std::shared_ptr<Gateway> make_gateway(const Scenario& scenario, const ProviderChoice& choice);

/// Caches loaded scenarios and gateways by their inputs.
class Runtime {
public:
    explicit Runtime(std::filesystem::path cache_dir) : cache_dir_(std::move(cache_dir)) {}

    /// `scenario_id` absent selects the file's default.
    std::shared_ptr<const Scenario> scenario(const std::filesystem::path& config, std::optional<int> scenario_id);
    std::shared_ptr<const Gateway> gateway(const Scenario& scenario, const std::string& provider,
                                           const std::filesystem::path& script);
    const std::filesystem::path& cache_dir() const { return cache_dir_; }

    /// Rebuilds a stored session from its meta.
    std::unique_ptr<DebugSession> restore(const SessionStore& store, const std::string& session_id);
    EngineOptions engine_options(const SessionMeta& meta, const Scenario& scenario) const;

private:
    std::filesystem::path cache_dir_;
    std::mutex mutex_;
    std::map<std::pair<std::string, int>, std::shared_ptr<const Scenario>> scenarios_;
    std::map<std::string, std::shared_ptr<const Gateway>> gateways_;
};

}  // namespace whai
