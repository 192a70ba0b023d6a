#include "whai/error.hpp"
#include "whai/providers.hpp"
#include "whai/util.hpp"

#include "httplib.h"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace whai {

LiveProviderConfig live_config_from_env() {
    LiveProviderConfig c;
    if (const char* base = std::getenv("WHAI_API_BASE"); base != nullptr && *base != '\0') {
        c.base_url = base;
    }
    if (const char* key = std::getenv("WHAI_API_KEY"); key != nullptr) {
        c.api_key = key;
    }
    return c;
}

LiveProvider::LiveProvider(LiveProviderConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error("endpoint URL needs a scheme: " + config_.base_url);
    }
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = config_.base_url;
    } else {
        scheme_host_ = config_.base_url.substr(0, path_start);
        path_prefix_ = config_.base_url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
        path_prefix_.pop_back();
    }
    if (config_.max_attempts < 1) {
        config_.max_attempts = 1;
    }
}

json chat_request_body(const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    return json{{"model", request.model_id},
                {"temperature", request.temperature},
                {"max_tokens", request.max_tokens},
                {"messages", messages}};
}

CompletionResponse parse_chat_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed provider response: ") + e.what(), false);
    }
    CompletionResponse r;
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        r.content = content.is_null() ? "" : content.get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            r.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("unexpected provider response shape: ") + e.what(), false);
    }
    r.provenance = Provenance::Live;
    return r;
}

CompletionResponse LiveProvider::complete(const CompletionRequest& request) {
    const auto body = chat_request_body(request).dump();
    const auto path = path_prefix_ + "/chat/completions";
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }

    auto backoff = config_.initial_backoff;
    std::string last_error;
    int last_status = 0;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        ++attempts_;
        httplib::Client client(scheme_host_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            last_status = 0;
        } else if (res->status >= 200 && res->status < 300) {
            return parse_chat_response(res->body);
        } else if (res->status >= 400 && res->status < 500 && res->status != 408 && res->status != 429) {
            throw ProviderError("provider rejected request with status " + std::to_string(res->status) + ": " +
                                    res->body.substr(0, 500),
                                false, res->status);
        } else {
            last_error = "provider status " + std::to_string(res->status);
            last_status = res->status;
        }
        if (attempt < config_.max_attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw ProviderError(last_error + " after " + std::to_string(config_.max_attempts) + " attempts", true,
                        last_status);
}

std::map<std::string, PriceEntry> load_price_table(const fs::path& path) {
    if (!fs::exists(path)) {
        throw ConfigError(path, "file not found");
    }
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError(path, e.mark.line + 1, e.mark.column + 1, e.msg);
    }
    if (!root.IsMap()) {
        throw ConfigError(path, "price table must be a mapping");
    }
    std::map<std::string, PriceEntry> out;
    for (const auto& kv : root) {
        const auto& v = kv.second;
        if (!v.IsMap() || !v["prompt_per_1k"] || !v["completion_per_1k"]) {
            const auto mark = kv.first.Mark();
            throw ConfigError(path, mark.line + 1, mark.column + 1,
                              "price entry needs prompt_per_1k and completion_per_1k");
        }
        out[kv.first.as<std::string>()] = {v["prompt_per_1k"].as<double>(), v["completion_per_1k"].as<double>()};
    }
    return out;
}

std::map<std::string, PriceEntry> prices_with_env_override(std::map<std::string, PriceEntry> base) {
    if (const char* p = std::getenv("WHAI_PRICE_TABLE"); p != nullptr && *p != '\0') {
        for (auto& [model, price] : load_price_table(p)) {
            base[model] = price;
        }
    }
    return base;
}

}  // namespace whai
