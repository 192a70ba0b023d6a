#include "whai/runtime.hpp"

#include "whai/error.hpp"
#include "whai/providers.hpp"

namespace fs = std::filesystem;

namespace whai {

std::shared_ptr<Gateway> make_gateway(const Scenario& scenario, const ProviderChoice& choice) {
    std::shared_ptr<Provider> provider;
    if (choice.kind == "scripted") {
        const auto script = choice.script.empty() ? scenario.config.scripted_responses_path : choice.script;
        if (script.empty()) {
            throw Error("scripted provider needs a rule file; the scenario names none");
        }
        provider = ScriptedProvider::from_file(script);
    } else if (choice.kind == "live") {
        provider = std::make_shared<LiveProvider>(live_config_from_env());
    } else {
        throw Error("unknown provider '" + choice.kind + "' (expected scripted or live)");
    }
    auto cache = std::make_shared<ResponseCache>(choice.cache_dir);
    return std::make_shared<Gateway>(std::move(provider), std::move(cache),
                                     prices_with_env_override(scenario.config.cost_table));
}

std::shared_ptr<const Scenario> Runtime::scenario(const fs::path& config, std::optional<int> scenario_id) {
    const auto key = std::make_pair(fs::absolute(config).lexically_normal().string(), scenario_id.value_or(-1));
    std::lock_guard lock(mutex_);
    if (auto it = scenarios_.find(key); it != scenarios_.end()) {
        return it->second;
    }
    auto s = std::make_shared<const Scenario>(load_scenario_bundle(config, scenario_id));
    scenarios_[key] = s;
    return s;
}

std::shared_ptr<const Gateway> Runtime::gateway(const Scenario& scenario, const std::string& provider,
                                                const fs::path& script) {
    const auto resolved = script.empty() ? scenario.config.scripted_responses_path : script;
    const auto key = provider + "|" + (provider == "scripted" ? fs::absolute(resolved).string() : std::string());
    std::lock_guard lock(mutex_);
    if (auto it = gateways_.find(key); it != gateways_.end()) {
        return it->second;
    }
    auto g = make_gateway(scenario, {provider, resolved, cache_dir_});
    gateways_[key] = g;
    return g;
}

EngineOptions Runtime::engine_options(const SessionMeta& meta, const Scenario& scenario) const {
    EngineOptions o;
    o.call.use_cache = meta.use_cache;
    o.salt = meta.salt;
    o.annotations = meta.annotations;
    o.summaries_dir = scenario.config.summaries_dir;
    return o;
}

std::unique_ptr<DebugSession> Runtime::restore(const SessionStore& store, const std::string& session_id) {
    const auto meta = store.load_meta(session_id);
    auto s = scenario(meta.scenario_config, meta.scenario_id);
    auto g = gateway(*s, meta.provider, meta.script);
    return store.restore(session_id, s, g, engine_options(meta, *s));
}

}  // namespace whai
