#pragma once

#include "whai/gateway.hpp"
#include "whai/providers.hpp"
#include "whai/scenario.hpp"
#include "whai/session.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace whai::test {

inline std::filesystem::path scenario_root() { return WHAI_SCENARIO_ROOT; }
inline std::filesystem::path pandas_config() { return scenario_root() / "pandas" / "config" / "config.yaml"; }

/// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("whai-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Wraps a provider and keeps every request it sees.
class RecordingProvider : public Provider {
public:
    explicit RecordingProvider(std::shared_ptr<Provider> inner) : inner_(std::move(inner)) {}
    CompletionResponse complete(const CompletionRequest& request) override {
        {
            std::lock_guard lock(mutex_);
            requests_.push_back(request);
        }
        auto response = inner_->complete(request);
        std::lock_guard lock(mutex_);
        responses_.push_back(response);
        return response;
    }
    Provenance kind() const override { return inner_->kind(); }
    std::vector<CompletionRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    /// Responses of the calls that succeeded, in call order.
    std::vector<CompletionResponse> responses() const {
        std::lock_guard lock(mutex_);
        return responses_;
    }
    void clear() {
        std::lock_guard lock(mutex_);
        requests_.clear();
        responses_.clear();
    }

private:
    std::shared_ptr<Provider> inner_;
    mutable std::mutex mutex_;
    std::vector<CompletionRequest> requests_;
    std::vector<CompletionResponse> responses_;
};

inline std::shared_ptr<const Scenario> load_pandas(int id = 1) {
    return std::make_shared<const Scenario>(load_scenario_bundle(pandas_config(), id));
}

struct Harness {
    std::shared_ptr<const Scenario> scenario;
    std::shared_ptr<RecordingProvider> provider;
    std::shared_ptr<Gateway> gateway;
    EngineOptions options;
};

/// Scripted gateway over the scenario's own rule table, caching under `dir`.
inline Harness make_harness(const std::filesystem::path& dir, int scenario_id = 1, bool use_cache = true) {
    Harness h;
    h.scenario = load_pandas(scenario_id);
    h.provider = std::make_shared<RecordingProvider>(
        ScriptedProvider::from_file(h.scenario->config.scripted_responses_path));
    h.gateway = std::make_shared<Gateway>(h.provider, std::make_shared<ResponseCache>(dir / "cache"),
                                          h.scenario->config.cost_table);
    h.options.call.use_cache = use_cache;
    h.options.summaries_dir = dir / "summaries";
    return h;
}

inline std::unique_ptr<DebugSession> make_session(const Harness& h, const std::string& id = "s") {
    return std::make_unique<DebugSession>(h.scenario, h.gateway, id, h.options);
}

inline std::string joined(const CompletionRequest& r) {
    std::string out;
    for (const auto& m : r.messages) {
        out += m.content;
        out += '\n';
    }
    return out;
}

/// Observation of `probe` for `agent` at encounter id `enc`, post phase.
inline const BeliefObservation* find_obs(const SessionState& state, const Role& agent, int enc,
                                         const std::string& probe = "stance") {
    for (const auto& o : state.observations) {
        if (o.agent_role == agent && o.encounter_id == enc && o.probe_id == probe && o.phase == ProbePhase::Post) {
            return &o;
        }
    }
    return nullptr;
}

}  // namespace whai::test
