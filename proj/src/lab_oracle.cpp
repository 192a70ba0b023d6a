#include "whai/lab_oracle.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include <algorithm>
#include <set>

namespace whai {

namespace {

// The line of `text` holding position `pos`.
std::string line_at(const std::string& text, std::size_t pos) {
    const auto begin = text.rfind('\n', pos);
    const auto end = text.find('\n', pos);
    const auto b = begin == std::string::npos ? 0 : begin + 1;
    return trim(text.substr(b, end == std::string::npos ? std::string::npos : end - b));
}

}  // namespace

KeywordMatcher::KeywordMatcher(std::map<std::string, std::vector<std::string>> table) : table_(std::move(table)) {}

std::vector<LabMatch> KeywordMatcher::match(const std::string& plan_text,
                                            const std::map<std::string, std::string>& candidates) {
    std::vector<LabMatch> out;
    for (const auto& [key, result] : candidates) {
        auto it = table_.find(key);
        if (it == table_.end()) {
            continue;
        }
        for (const auto& phrase : it->second) {
            const auto pos = find_word_icase(plan_text, phrase);
            if (pos != std::string::npos) {
                out.push_back({key, line_at(plan_text, pos)});
                break;
            }
        }
    }
    return out;
}

LlmLabMatcher::LlmLabMatcher(Context context) : context_(std::move(context)) {
    if (context_.gateway == nullptr) {
        throw Error("lab matcher needs a gateway");
    }
}

CompletionRequest LlmLabMatcher::build_request(const Context& context, const std::string& plan_text,
                                               const std::map<std::string, std::string>& candidates) {
    CompletionRequest r;
    r.model_id = context.defaults.model_id;
    r.temperature = context.defaults.temperature;
    r.max_tokens = context.defaults.max_tokens;
    r.salt = context.defaults.salt;
    r.messages.push_back({MessageRole::System, context.lab_persona});
    std::string held;
    for (const auto& [key, result] : candidates) {
        held += "- " + key + ": " + result + "\n";
    }
    r.messages.push_back(
        {MessageRole::User,
         "Orders from the visit plan:\n" + plan_text +
             "\n\nHidden results you hold, by key:\n" + held +
             "\nWhich keys could one of the ordered tests conceivably produce? Reply with the matching keys "
             "separated by commas, or NONE. Reply with keys only."});
    r.annotations = context.annotations;
    r.annotations["purpose"] = to_string(CallPurpose::LabMatch);
    r.annotations["role"] = context.lab_role;
    r.annotations["encounter"] = std::to_string(context.encounter);
    return r;
}

std::vector<std::string> LlmLabMatcher::parse_reply(const std::string& reply) {
    std::vector<std::string> keys;
    std::string token;
    auto flush = [&] {
        auto t = to_lower(trim(token));
        while (!t.empty() && (t.back() == '.' || t.back() == '*' || t.back() == '`')) {
            t.pop_back();
        }
        while (!t.empty() && (t.front() == '*' || t.front() == '`' || t.front() == '-')) {
            t.erase(t.begin());
        }
        if (!t.empty() && t != "none" && std::find(keys.begin(), keys.end(), t) == keys.end()) {
            keys.push_back(t);
        }
        token.clear();
    };
    for (char c : reply) {
        if (c == ',' || c == '\n' || c == ' ' || c == ';' || c == '\t') {
            flush();
        } else {
            token.push_back(c);
        }
    }
    flush();
    return keys;
}

std::vector<LabMatch> LlmLabMatcher::match(const std::string& plan_text,
                                           const std::map<std::string, std::string>& candidates) {
    dropped_.clear();
    const auto request = build_request(context_, plan_text, candidates);
    const auto response = context_.gateway->complete(
        request, context_.options, CallInfo{context_.lab_role, context_.encounter, CallPurpose::LabMatch},
        context_.ledger);
    last_response_ = response.content;
    std::vector<LabMatch> out;
    for (const auto& key : parse_reply(response.content)) {
        if (candidates.contains(key)) {
            out.push_back({key, trim(plan_text)});
        } else {
            dropped_.push_back(key);
        }
    }
    return out;
}

std::vector<LabRelease> release_for_orders(const std::string& plan_text, HiddenLabSet& hidden, LabMatcher& matcher,
                                           LogicalTime at) {
    if (trim(plan_text).empty()) {
        return {};
    }
    const auto candidates = hidden.unreleased();
    if (candidates.empty()) {
        return {};
    }
    const auto matches = matcher.match(plan_text, candidates);
    std::vector<LabRelease> out;
    std::set<std::string> seen;
    for (const auto& m : matches) {
        auto it = candidates.find(m.key);
        if (it == candidates.end() || !seen.insert(m.key).second) {
            continue;
        }
        out.push_back({m.key, it->second, at, m.order_fragment, matcher.name()});
    }
    for (const auto& r : out) {
        hidden.released.insert(r.lab_key);
    }
    return out;
}

std::vector<LabRelease> force_in_visit_labs(const EncounterSpec& encounter, LogicalTime at) {
    std::vector<LabRelease> out;
    for (const auto& lab : encounter.in_visit_labs) {
        out.push_back({lab.test, lab.result, at, lab.test, kMatcherInVisit});
    }
    return out;
}

std::string release_record_body(const LabRelease& release) {
    return "Labs: " + release.lab_key + ": " + release.result_text;
}

}  // namespace whai
