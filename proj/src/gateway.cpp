#include "whai/gateway.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace whai {

namespace {

void append_field(std::string& out, std::string_view name, std::string_view value) {
    out.append(name);
    out.push_back(':');
    out.append(std::to_string(value.size()));
    out.push_back(':');
    out.append(value);
    out.push_back('\n');
}

json response_json(const CompletionResponse& r) {
    return json{{"content", r.content}};
}

json usage_json(const Usage& u) {
    return json{{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}};
}

}  // namespace

std::string to_string(MessageRole role) {
    switch (role) {
    case MessageRole::System: return "system";
    case MessageRole::User: return "user";
    case MessageRole::Assistant: return "assistant";
    }
    return "user";
}

MessageRole parse_message_role(const std::string& s) {
    if (s == "system") return MessageRole::System;
    if (s == "user") return MessageRole::User;
    if (s == "assistant") return MessageRole::Assistant;
    throw Error("unknown message role '" + s + "'");
}

std::string to_string(Provenance p) {
    switch (p) {
    case Provenance::Live: return "live";
    case Provenance::Cached: return "cached";
    case Provenance::Scripted: return "scripted";
    }
    return "live";
}

std::string canonical_form(const CompletionRequest& request) {
    std::string out = "whai.completion.v1\n";
    append_field(out, "model", request.model_id);
    append_field(out, "temperature", format_fixed(request.temperature, 6));
    append_field(out, "max_tokens", std::to_string(request.max_tokens));
    append_field(out, "salt", std::to_string(request.salt));
    append_field(out, "messages", std::to_string(request.messages.size()));
    for (const auto& m : request.messages) {
        append_field(out, "role", to_string(m.role));
        append_field(out, "content", m.content);
    }
    return out;
}

std::string cache_key(const CompletionRequest& request) { return sha256_hex(canonical_form(request)); }

json canonical_request_json(const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    return json{{"model", request.model_id},
                {"temperature", format_fixed(request.temperature, 6)},
                {"max_tokens", request.max_tokens},
                {"salt", request.salt},
                {"messages", messages}};
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) {
        throw CacheIoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
    }
}

fs::path ResponseCache::file_for(const std::string& key) const { return dir_ / (key + ".json"); }

bool ResponseCache::contains(const std::string& key) const { return fs::exists(file_for(key)); }

std::optional<CacheEntry> ResponseCache::get(const std::string& key) const {
    const auto path = file_for(key);
    if (!fs::exists(path)) {
        return std::nullopt;
    }
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        throw CacheIoError("unreadable cache entry " + path.string() + ": " + e.what());
    }
    CacheEntry entry;
    entry.key = j.at("key").get<std::string>();
    entry.request = j.at("request");
    entry.response.content = j.at("response").at("content").get<std::string>();
    entry.response.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
    entry.response.usage.completion_tokens = j.at("usage").at("completion_tokens").get<std::int64_t>();
    entry.response.provenance = Provenance::Cached;
    entry.created_at = j.value("created_at", "");
    if (entry.key != key) {
        throw CacheIoError("cache entry " + path.string() + " carries key " + entry.key);
    }
    return entry;
}

void ResponseCache::put(const CacheEntry& entry) const {
    const json j{{"key", entry.key},
                 {"request", entry.request},
                 {"response", response_json(entry.response)},
                 {"usage", usage_json(entry.response.usage)},
                 {"created_at", entry.created_at}};
    try {
        write_text_file_atomic(file_for(entry.key), j.dump(2) + "\n");
    } catch (const Error& e) {
        throw CacheIoError(e.what());
    }
}

std::size_t ResponseCache::size() const {
    std::size_t n = 0;
    if (!fs::exists(dir_)) {
        return 0;
    }
    for (const auto& f : fs::directory_iterator(dir_)) {
        if (f.path().extension() == ".json") {
            ++n;
        }
    }
    return n;
}

void ResponseCache::clear() const {
    if (!fs::exists(dir_)) {
        return;
    }
    for (const auto& f : fs::directory_iterator(dir_)) {
        if (f.path().extension() == ".json") {
            fs::remove(f.path());
        }
    }
}

std::string to_string(CallPurpose purpose) {
    switch (purpose) {
    case CallPurpose::Dialogue: return "dialogue";
    case CallPurpose::EmrReview: return "emr-review";
    case CallPurpose::EmrSummary: return "emr-summary";
    case CallPurpose::BeliefProbe: return "belief-probe";
    case CallPurpose::LabMatch: return "lab-match";
    case CallPurpose::DocSummary: return "doc-summary";
    case CallPurpose::Pruning: return "pruning";
    }
    return "dialogue";
}

CallPurpose parse_call_purpose(const std::string& s) {
    for (auto p : {CallPurpose::Dialogue, CallPurpose::EmrReview, CallPurpose::EmrSummary, CallPurpose::BeliefProbe,
                   CallPurpose::LabMatch, CallPurpose::DocSummary, CallPurpose::Pruning}) {
        if (to_string(p) == s) {
            return p;
        }
    }
    throw Error("unknown call purpose '" + s + "'");
}

void UsageLedger::record(UsageRecord r) { records_.push_back(std::move(r)); }

void UsageLedger::append(const UsageLedger& other) {
    records_.insert(records_.end(), other.records_.begin(), other.records_.end());
}

Usage UsageLedger::totals() const {
    Usage u;
    for (const auto& r : records_) {
        u.prompt_tokens += r.prompt_tokens;
        u.completion_tokens += r.completion_tokens;
    }
    return u;
}

double UsageLedger::total_cost() const {
    double c = 0.0;
    for (const auto& r : records_) {
        c += r.cost_usd;
    }
    return c;
}

std::map<CallPurpose, std::size_t> UsageLedger::calls_by_purpose() const {
    std::map<CallPurpose, std::size_t> out;
    for (const auto& r : records_) {
        ++out[r.purpose];
    }
    return out;
}

json UsageLedger::to_json() const {
    json records = json::array();
    for (const auto& r : records_) {
        records.push_back({{"role", r.role},
                           {"encounter", r.encounter},
                           {"purpose", to_string(r.purpose)},
                           {"prompt_tokens", r.prompt_tokens},
                           {"completion_tokens", r.completion_tokens},
                           {"cost_usd", r.cost_usd}});
    }
    const auto t = totals();
    return json{{"records", records},
                {"calls", records_.size()},
                {"prompt_tokens", t.prompt_tokens},
                {"completion_tokens", t.completion_tokens},
                {"total_tokens", t.total()},
                {"cost_usd", total_cost()}};
}

double cost_for(const std::map<std::string, PriceEntry>& prices, const std::string& model_id, const Usage& usage) {
    auto it = prices.find(model_id);
    if (it == prices.end()) {
        return 0.0;
    }
    return static_cast<double>(usage.prompt_tokens) / 1000.0 * it->second.prompt_per_1k +
           static_cast<double>(usage.completion_tokens) / 1000.0 * it->second.completion_per_1k;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache,
                 std::map<std::string, PriceEntry> prices)
    : provider_(std::move(provider)), cache_(std::move(cache)), prices_(std::move(prices)) {
    if (!provider_) {
        throw Error("gateway needs a provider");
    }
}

CompletionResponse Gateway::complete(const CompletionRequest& request, const CallOptions& options,
                                     const CallInfo& info, UsageLedger* ledger) const {
    const std::string key = cache_key(request);
    const bool cache_enabled = options.use_cache && cache_ != nullptr;
    if (cache_enabled || options.cache_only) {
        if (cache_ != nullptr) {
            if (auto hit = cache_->get(key)) {
                return hit->response;
            }
        }
        if (options.cache_only) {
            throw CacheMissError(key);
        }
    }

    CompletionResponse response;
    try {
        response = provider_->complete(request);
    } catch (const ProviderError& e) {
        throw ProviderError(std::string(e.what()) + " [role=" + info.role + " encounter=" +
                                std::to_string(info.encounter) + " purpose=" + to_string(info.purpose) +
                                " key=" + key + "]",
                            e.retryable(), e.status());
    }
    ++provider_calls_;
    if (response.usage.prompt_tokens < 0 || response.usage.completion_tokens < 0) {
        throw ProviderError("provider reported negative usage", false);
    }
    if (ledger != nullptr) {
        ledger->record(UsageRecord{info.role, info.encounter, info.purpose, response.usage.prompt_tokens,
                                   response.usage.completion_tokens,
                                   cost_for(prices_, request.model_id, response.usage)});
    }
    if (cache_enabled) {
        cache_->put(CacheEntry{key, canonical_request_json(request), response, iso8601_now()});
    }
    return response;
}

DocumentSummarizer::DocumentSummarizer(const Gateway& gateway, fs::path store_dir)
    : gateway_(gateway), store_dir_(std::move(store_dir)) {}

fs::path DocumentSummarizer::entry_path(const Role& role, int doc_id, std::string_view document) const {
    return store_dir_ / role / (std::to_string(doc_id) + "-" + sha256_hex(document).substr(0, 16) + ".txt");
}

std::string DocumentSummarizer::summarize(const AgentSpec& agent, int doc_id, std::string_view document,
                                          const std::string& system_prompt, const RequestDefaults& defaults,
                                          const CallOptions& options, int encounter, UsageLedger* ledger,
                                          std::map<std::string, std::string> annotations) const {
    if (trim(document).empty()) {
        throw Error("nothing to summarize: document " + std::to_string(doc_id) + " is empty");
    }
    const auto path = entry_path(agent.role, doc_id, document);
    if (options.use_cache && !store_dir_.empty() && fs::exists(path)) {
        return read_text_file(path);
    }
    CompletionRequest request;
    request.model_id = defaults.model_id;
    request.temperature = defaults.temperature;
    request.max_tokens = defaults.max_tokens;
    request.salt = defaults.salt;
    request.messages.push_back({MessageRole::System, system_prompt});
    request.messages.push_back(
        {MessageRole::User, "Read the following document and write the summary you would keep in your own notes as the " +
                                agent.role +
                                ". Keep what you consider relevant to your practice and leave out what you do not.\n\n"
                                "Document " + std::to_string(doc_id) + ":\n" + std::string(document)});
    annotations["role"] = agent.role;
    annotations["purpose"] = to_string(CallPurpose::DocSummary);
    annotations["encounter"] = std::to_string(encounter);
    annotations["doc_id"] = std::to_string(doc_id);
    request.annotations = std::move(annotations);
    const auto response =
        gateway_.complete(request, options, CallInfo{agent.role, encounter, CallPurpose::DocSummary}, ledger);
    if (!store_dir_.empty()) {
        write_text_file_atomic(path, response.content);
    }
    return response.content;
}

}  // namespace whai
