#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace whai {

using Role = std::string;

/// Reserved document id for the file injected into every system prompt.
inline constexpr int kGlobalDocumentId = 0;

enum class ResponseKind { Categorical, Numeric, FreeformList };
enum class ProbeSchedule { PreEncounter, PostEncounter, OnDemand };

/// Target token meaning "every specialist agent".
inline constexpr const char* kTargetAll = "all";
/// Target token meaning "the specialist seen in the current encounter".
inline constexpr const char* kTargetDoctor = "doctor";

struct BeliefProbe {
    std::string id;
    std::string prompt_template;
    std::string parse_expr;
    ResponseKind kind = ResponseKind::Categorical;
    /// Categorical only; ordered from lowest to highest belief.
    std::vector<std::string> categories;
    /// Optional category -> score table; must increase along `categories`.
    std::map<std::string, double> scores;
    double min = 0.0;
    double max = 10.0;
    ProbeSchedule schedule = ProbeSchedule::PostEncounter;
    /// Role names, "all", or "doctor". Empty means "doctor".
    std::vector<Role> targets;

    /// Compiled form of parse_expr (case-insensitive ECMAScript); set by compile_probe().
    std::shared_ptr<const std::regex> compiled;

    /// Compares the declarative fields; the compiled regex is derived state.
    bool operator==(const BeliefProbe& other) const;
};

/// Validates and compiles a probe in place. Categories are inferred from a
/// single alternation group such as "(rejects|skeptical|neutral|believes)"
/// when none are declared. Throws Error on an invalid expression or table.
void compile_probe(BeliefProbe& probe);

enum class Visibility { FullRecord, OwnAuthoredOnly, None };

struct RecordOverride {
    std::uint64_t record_id = 0;
    Role role;
    bool visible = false;
    bool operator==(const RecordOverride&) const = default;
};

struct RecordsPolicy {
    Visibility default_class = Visibility::FullRecord;
    std::map<Role, Visibility> rules;
    std::vector<RecordOverride> overrides;

    Visibility class_for(const Role& role) const;
    bool permits(const Role& viewer, const Role& author, std::uint64_t record_id) const;
    bool operator==(const RecordsPolicy&) const = default;
};

struct HiddenLabSet {
    std::map<std::string, std::string> entries;
    std::set<std::string> released;

    bool is_released(const std::string& key) const { return released.contains(key); }
    std::map<std::string, std::string> unreleased() const;
    bool operator==(const HiddenLabSet&) const = default;
};

struct LabResult {
    std::string test;
    std::string result;
    bool operator==(const LabResult&) const = default;
};

struct EncounterSpec {
    int encounter_id = 0;
    Role doctor_role;
    std::vector<int> doctor_preread;
    std::vector<LabResult> in_visit_labs;
    std::string doctor_context;
    std::string moderator_context;
    std::string reason_for_visit;
    int max_turns = 4;
    bool operator==(const EncounterSpec&) const = default;
};

struct PrimedDocument {
    int doc_id = 0;
    std::string summary;
    bool operator==(const PrimedDocument&) const = default;
};

struct AgentSpec {
    Role role;
    std::string persona_text;
    std::string voice_text;
    std::vector<PrimedDocument> primed_docs;
    bool operator==(const AgentSpec&) const = default;
};

struct PriceEntry {
    double prompt_per_1k = 0.0;
    double completion_per_1k = 0.0;
    bool operator==(const PriceEntry&) const = default;
};

enum class LabMatcherKind { Llm, KeywordTable };

struct ScenarioConfig {
    int scenario_id = 0;
    std::string model_id;
    int max_tokens = 0;
    double temperature = 0.0;
    Role moderator_role;
    std::string doctor_prefix;
    std::filesystem::path persona_dir;
    std::filesystem::path voice_dir;
    std::filesystem::path summaries_dir;
    std::filesystem::path documents_dir;
    std::filesystem::path encounters_path;
    std::filesystem::path hidden_labs_path;
    std::filesystem::path lab_keywords_path;
    std::filesystem::path scripted_responses_path;
    std::string emr_prompt;
    std::vector<BeliefProbe> belief_probes;
    RecordsPolicy records_policy;
    std::map<std::string, PriceEntry> cost_table;
    LabMatcherKind lab_matcher = LabMatcherKind::Llm;
    Role lab_role = "lab";
    int history_token_budget = 4000;
    std::string closing_marker = "[END VISIT]";

    bool operator==(const ScenarioConfig&) const = default;
};

/// Default EMR summarization prompt; asks for the fixed section headers.
const std::string& default_emr_prompt();

/// Loads one scenario from a config.yaml. Uses the file's `default` id when
/// `scenario_id` is absent. Relative paths resolve against the scenario root:
/// the parent of the config file's directory when that directory is named
/// "config", otherwise the config file's directory.
ScenarioConfig load_scenario(const std::filesystem::path& config_path, std::optional<int> scenario_id = {});

/// Returns encounters sorted by id. `role_known` (when given) rejects unknown doctor roles.
std::vector<EncounterSpec> load_encounters(const std::filesystem::path& path,
                                           const std::function<bool(const Role&)>& role_known = {});

HiddenLabSet load_hidden_labs(const std::filesystem::path& path);

/// Keyword table for the offline lab matcher: lab key -> trigger phrases.
std::map<std::string, std::vector<std::string>> load_lab_keywords(const std::filesystem::path& path);

/// Serializes a loaded config as a single-scenario config.yaml with absolute paths.
std::string dump_scenario(const ScenarioConfig& config);

std::string to_string(ResponseKind kind);
std::string to_string(ProbeSchedule schedule);
std::string to_string(Visibility visibility);
std::string to_string(LabMatcherKind kind);
ResponseKind parse_response_kind(const std::string& s);
ProbeSchedule parse_schedule(const std::string& s);
Visibility parse_visibility(const std::string& s);

/// Everything a session needs, resolved from a config.
struct Scenario {
    ScenarioConfig config;
    std::vector<EncounterSpec> encounters;
    std::map<Role, AgentSpec> agents;
    HiddenLabSet hidden_labs;
    std::map<std::string, std::vector<std::string>> lab_keywords;
    std::string lab_persona;
    /// Content of document 0, empty when absent.
    std::string global_document;

    const EncounterSpec& encounter(int encounter_id) const;
    /// Reads documents_dir/<id>.txt.
    std::string document(int doc_id) const;
    std::vector<Role> specialist_roles() const;
    bool has_agent(const Role& role) const { return agents.contains(role); }
};

Scenario load_scenario_bundle(const std::filesystem::path& config_path, std::optional<int> scenario_id = {});
Scenario make_scenario_bundle(const ScenarioConfig& config);

}  // namespace whai
