#pragma once

#include "whai/gateway.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace whai {

/// Score generator for probe rules: base plus every `add` whose phrase occurs
/// in the request, plus a deterministic jitter drawn from the request digest,
/// clamped to [min, max]. `bands` maps the score to a stance label.
struct ScoreRule {
    struct Term {
        std::string contains;
        int value = 0;
    };
    struct Band {
        int upto = 0;
        std::string label;
    };
    int base = 0;
    std::vector<Term> add;
    int jitter = 0;
    int min = 0;
    int max = 10;
    std::vector<Band> bands;

    int evaluate(const CompletionRequest& request) const;
    std::string stance_for(int score) const;
};

struct ScriptRule {
    /// Annotation equality constraints (purpose, role, encounter, turn, probe, ...).
    std::map<std::string, std::string> when;
    std::optional<std::regex> last_user_matches;
    std::string last_user_pattern;
    /// Every phrase must occur somewhere in the request messages.
    std::vector<std::string> context_contains;
    /// None of these phrases may occur.
    std::vector<std::string> context_lacks;
    std::string respond;
    std::optional<ScoreRule> score;

    bool matches(const CompletionRequest& request) const;
};

/// Offline provider answering from an ordered rule table; the first matching
/// rule wins and an unmatched request raises ScriptMissError.
class ScriptedProvider : public Provider {
public:
    explicit ScriptedProvider(std::vector<ScriptRule> rules);
    static std::shared_ptr<ScriptedProvider> from_file(const std::filesystem::path& path);

    CompletionResponse complete(const CompletionRequest& request) override;
    Provenance kind() const override { return Provenance::Scripted; }

    std::int64_t calls() const { return calls_.load(); }
    const std::vector<ScriptRule>& rules() const { return rules_; }

private:
    std::vector<ScriptRule> rules_;
    std::atomic<std::int64_t> calls_{0};
};

/// Token usage the scripted provider reports for a request/response pair.
Usage scripted_usage(const CompletionRequest& request, const std::string& content);

struct LiveProviderConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::seconds timeout{120};
};

/// Reads WHAI_API_BASE and WHAI_API_KEY.
LiveProviderConfig live_config_from_env();

/// OpenAI-compatible chat-completion client.
class LiveProvider : public Provider {
public:
    explicit LiveProvider(LiveProviderConfig config);

    CompletionResponse complete(const CompletionRequest& request) override;
    Provenance kind() const override { return Provenance::Live; }

    std::int64_t attempts() const { return attempts_.load(); }

private:
    LiveProviderConfig config_;
    std::string scheme_host_;
    std::string path_prefix_;
    std::atomic<std::int64_t> attempts_{0};
};

/// Wire body for a chat-completion POST.
nlohmann::json chat_request_body(const CompletionRequest& request);
/// Parses choices[0].message.content and usage from a chat-completion reply.
CompletionResponse parse_chat_response(const std::string& body);

/// model -> {prompt_per_1k, completion_per_1k}, YAML or JSON.
std::map<std::string, PriceEntry> load_price_table(const std::filesystem::path& path);
/// `base` overlaid with the table named by WHAI_PRICE_TABLE, if set.
std::map<std::string, PriceEntry> prices_with_env_override(std::map<std::string, PriceEntry> base);

}  // namespace whai
