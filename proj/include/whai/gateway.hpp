#pragma once

#include "whai/scenario.hpp"

#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace whai {

enum class MessageRole { System, User, Assistant };

struct ChatMessage {
    MessageRole role = MessageRole::User;
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
    std::string model_id;
    double temperature = 0.0;
    int max_tokens = 0;
    std::vector<ChatMessage> messages;
    /// Replicate salt. Keyed, so replicates cache independently.
    std::uint64_t salt = 0;

    /// Not keyed: routing metadata (role, encounter, turn, purpose, ...).
    std::map<std::string, std::string> annotations;
    /// Not keyed: display only.
    std::string timestamp;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t total() const { return prompt_tokens + completion_tokens; }
    bool operator==(const Usage&) const = default;
};

enum class Provenance { Live, Cached, Scripted };

struct CompletionResponse {
    std::string content;
    Usage usage;
    Provenance provenance = Provenance::Live;
};

std::string to_string(MessageRole role);
MessageRole parse_message_role(const std::string& s);
std::string to_string(Provenance p);

/// Length-prefixed serialization of exactly the keyed fields: model id,
/// temperature (six decimals), max_tokens, salt, and the ordered messages.
std::string canonical_form(const CompletionRequest& request);

/// SHA-256 over canonical_form().
std::string cache_key(const CompletionRequest& request);

nlohmann::json canonical_request_json(const CompletionRequest& request);

class Provider {
public:
    virtual ~Provider() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    /// Live or Scripted.
    virtual Provenance kind() const = 0;
};

struct CacheEntry {
    std::string key;
    nlohmann::json request;
    CompletionResponse response;
    std::string created_at;
};

/// One JSON file per entry at <dir>/<key>.json.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<CacheEntry> get(const std::string& key) const;
    void put(const CacheEntry& entry) const;
    bool contains(const std::string& key) const;
    std::size_t size() const;
    void clear() const;
    std::filesystem::path file_for(const std::string& key) const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

enum class CallPurpose { Dialogue, EmrReview, EmrSummary, BeliefProbe, LabMatch, DocSummary, Pruning };

std::string to_string(CallPurpose purpose);
CallPurpose parse_call_purpose(const std::string& s);

struct UsageRecord {
    Role role;
    int encounter = 0;
    CallPurpose purpose = CallPurpose::Dialogue;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double cost_usd = 0.0;
};

class UsageLedger {
public:
    void record(UsageRecord r);
    void append(const UsageLedger& other);
    const std::vector<UsageRecord>& records() const { return records_; }
    std::size_t calls() const { return records_.size(); }
    Usage totals() const;
    double total_cost() const;
    std::map<CallPurpose, std::size_t> calls_by_purpose() const;
    nlohmann::json to_json() const;

private:
    std::vector<UsageRecord> records_;
};

double cost_for(const std::map<std::string, PriceEntry>& prices, const std::string& model_id, const Usage& usage);

struct CallOptions {
    bool use_cache = true;
    /// Replay mode: never reach the provider; a miss raises CacheMissError.
    bool cache_only = false;
};

struct CallInfo {
    Role role;
    int encounter = 0;
    CallPurpose purpose = CallPurpose::Dialogue;
};

/// Provider + cache + pricing. Safe for concurrent callers.
class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache,
            std::map<std::string, PriceEntry> prices = {});

    /// Cache hit (when use_cache) returns the stored response with provenance
    /// Cached and no provider call. Otherwise calls the provider, records usage
    /// in `ledger`, and writes a cache entry when use_cache.
    CompletionResponse complete(const CompletionRequest& request, const CallOptions& options, const CallInfo& info,
                                UsageLedger* ledger) const;

    std::int64_t provider_calls() const { return provider_calls_.load(); }
    const std::shared_ptr<Provider>& provider() const { return provider_; }
    const std::shared_ptr<ResponseCache>& cache() const { return cache_; }
    const std::map<std::string, PriceEntry>& prices() const { return prices_; }

private:
    std::shared_ptr<Provider> provider_;
    std::shared_ptr<ResponseCache> cache_;
    std::map<std::string, PriceEntry> prices_;
    mutable std::atomic<std::int64_t> provider_calls_{0};
};

struct RequestDefaults {
    std::string model_id;
    double temperature = 0.0;
    int max_tokens = 0;
    std::uint64_t salt = 0;
};

/// Persona-filtered document internalization, stored under
/// <store>/<role>/<doc id>-<document digest>.txt for reuse.
class DocumentSummarizer {
public:
    DocumentSummarizer(const Gateway& gateway, std::filesystem::path store_dir);

    std::string summarize(const AgentSpec& agent, int doc_id, std::string_view document, const std::string& system_prompt,
                          const RequestDefaults& defaults, const CallOptions& options, int encounter,
                          UsageLedger* ledger, std::map<std::string, std::string> annotations = {}) const;

    std::filesystem::path entry_path(const Role& role, int doc_id, std::string_view document) const;

private:
    const Gateway& gateway_;
    std::filesystem::path store_dir_;
};

}  // namespace whai
