#pragma once

#include "whai/emr.hpp"
#include "whai/gateway.hpp"
#include "whai/scenario.hpp"

#include <map>
#include <string>
#include <vector>

namespace whai {

inline constexpr const char* kMatcherInVisit = "in-visit";

struct LabRelease {
    std::string lab_key;
    std::string result_text;
    LogicalTime released_at;
    std::string matched_order_text;
    /// "llm", "keyword-table", or "in-visit".
    std::string matcher;
    bool operator==(const LabRelease&) const = default;
};

struct LabMatch {
    std::string key;
    std::string order_fragment;
};

class LabMatcher {
public:
    virtual ~LabMatcher() = default;
    /// Keys of `candidates` an order in `plan_text` could produce.
    virtual std::vector<LabMatch> match(const std::string& plan_text,
                                        const std::map<std::string, std::string>& candidates) = 0;
    virtual std::string name() const = 0;
    /// Keys proposed by the matcher that were not candidates.
    virtual std::vector<std::string> dropped() const { return {}; }
};

/// Whole-word, case-insensitive trigger phrases per lab key.
class KeywordMatcher : public LabMatcher {
public:
    explicit KeywordMatcher(std::map<std::string, std::vector<std::string>> table);
    std::vector<LabMatch> match(const std::string& plan_text,
                                const std::map<std::string, std::string>& candidates) override;
    std::string name() const override { return "keyword-table"; }

private:
    std::map<std::string, std::vector<std::string>> table_;
};

/// Asks the lab agent, through the gateway, which hidden keys the plan covers.
class LlmLabMatcher : public LabMatcher {
public:
    struct Context {
        const Gateway* gateway = nullptr;
        std::string lab_persona;
        RequestDefaults defaults;
        CallOptions options;
        Role lab_role = "lab";
        int encounter = 0;
        UsageLedger* ledger = nullptr;
        std::map<std::string, std::string> annotations;
    };

    explicit LlmLabMatcher(Context context);
    std::vector<LabMatch> match(const std::string& plan_text,
                                const std::map<std::string, std::string>& candidates) override;
    std::string name() const override { return "llm"; }
    std::vector<std::string> dropped() const override { return dropped_; }
    const std::string& last_response() const { return last_response_; }

    static CompletionRequest build_request(const Context& context, const std::string& plan_text,
                                           const std::map<std::string, std::string>& candidates);
    /// Keys named in a reply; "NONE" yields nothing.
    static std::vector<std::string> parse_reply(const std::string& reply);

private:
    Context context_;
    std::vector<std::string> dropped_;
    std::string last_response_;
};

/// Releases every unreleased hidden lab the matcher attributes to the plan and
/// marks it released. On matcher failure the exception propagates and `hidden`
/// is left untouched.
std::vector<LabRelease> release_for_orders(const std::string& plan_text, HiddenLabSet& hidden, LabMatcher& matcher,
                                           LogicalTime at);

/// Scripted in-office results, released without an order.
std::vector<LabRelease> force_in_visit_labs(const EncounterSpec& encounter, LogicalTime at);

/// EMR body used for a release record.
std::string release_record_body(const LabRelease& release);

}  // namespace whai
