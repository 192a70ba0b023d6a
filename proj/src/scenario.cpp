#include "whai/scenario.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <limits>
#include <set>

namespace fs = std::filesystem;

namespace whai {

namespace {

YAML::Node load_yaml(const fs::path& path) {
    if (!fs::exists(path)) {
        throw ConfigError(path, "file not found");
    }
    try {
        return YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError(path, e.mark.line + 1, e.mark.column + 1, e.msg);
    }
}

[[noreturn]] void fail(const fs::path& path, const YAML::Node& node, const std::string& message) {
    const auto mark = node.Mark();
    if (mark.is_null()) {
        throw ConfigError(path, message);
    }
    throw ConfigError(path, mark.line + 1, mark.column + 1, message);
}

void check_keys(const fs::path& path, const YAML::Node& node, const std::set<std::string>& allowed,
                const std::string& what) {
    if (!node.IsMap()) {
        fail(path, node, what + " must be a mapping");
    }
    std::set<std::string> seen;
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.contains(key)) {
            fail(path, kv.first, "unknown key '" + key + "' in " + what);
        }
        if (!seen.insert(key).second) {
            fail(path, kv.first, "duplicate key '" + key + "' in " + what);
        }
    }
}

template <typename T>
T get_as(const fs::path& path, const YAML::Node& node, const std::string& what) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        fail(path, node, "invalid value for " + what);
    }
}

template <typename T>
T required(const fs::path& path, const YAML::Node& parent, const std::string& key) {
    const auto node = parent[key];
    if (!node) {
        fail(path, parent, "missing required key '" + key + "'");
    }
    return get_as<T>(path, node, key);
}

template <typename T>
T optional_or(const fs::path& path, const YAML::Node& parent, const std::string& key, T fallback) {
    const auto node = parent[key];
    if (!node || node.IsNull()) {
        return fallback;
    }
    return get_as<T>(path, node, key);
}

fs::path resolve(const fs::path& root, const std::string& p) {
    fs::path candidate(p);
    if (candidate.is_relative()) {
        candidate = root / candidate;
    }
    return candidate.lexically_normal();
}

fs::path scenario_root_for(const fs::path& config_path) {
    const auto dir = fs::absolute(config_path).parent_path();
    if (dir.filename() == "config") {
        return dir.parent_path();
    }
    return dir;
}

BeliefProbe parse_probe(const fs::path& path, const YAML::Node& node) {
    check_keys(path, node,
               {"id", "prompt", "parse_expr", "belief_parse_expr", "kind", "categories", "scores", "range",
                "schedule", "targets"},
               "belief probe");
    BeliefProbe probe;
    probe.id = required<std::string>(path, node, "id");
    probe.prompt_template = required<std::string>(path, node, "prompt");
    if (node["parse_expr"] && node["belief_parse_expr"]) {
        fail(path, node, "probe '" + probe.id + "' sets both parse_expr and belief_parse_expr");
    }
    if (node["parse_expr"]) {
        probe.parse_expr = required<std::string>(path, node, "parse_expr");
    } else {
        probe.parse_expr = required<std::string>(path, node, "belief_parse_expr");
    }
    try {
        probe.kind = parse_response_kind(optional_or<std::string>(path, node, "kind", "categorical"));
        probe.schedule = parse_schedule(optional_or<std::string>(path, node, "schedule", "post-encounter"));
    } catch (const Error& e) {
        fail(path, node, e.what());
    }
    if (node["categories"]) {
        probe.categories = get_as<std::vector<std::string>>(path, node["categories"], "categories");
    }
    if (node["scores"]) {
        probe.scores = get_as<std::map<std::string, double>>(path, node["scores"], "scores");
    }
    if (node["range"]) {
        const auto range = get_as<std::vector<double>>(path, node["range"], "range");
        if (range.size() != 2) {
            fail(path, node["range"], "range must be [min, max]");
        }
        probe.min = range[0];
        probe.max = range[1];
    }
    if (node["targets"]) {
        if (node["targets"].IsScalar()) {
            probe.targets = {node["targets"].as<std::string>()};
        } else {
            probe.targets = get_as<std::vector<std::string>>(path, node["targets"], "targets");
        }
    }
    try {
        compile_probe(probe);
    } catch (const Error& e) {
        fail(path, node, "probe '" + probe.id + "': " + e.what());
    }
    return probe;
}

RecordsPolicy parse_policy(const fs::path& path, const YAML::Node& node) {
    check_keys(path, node, {"default", "roles", "overrides"}, "records_policy");
    RecordsPolicy policy;
    try {
        policy.default_class = parse_visibility(optional_or<std::string>(path, node, "default", "full-record"));
        if (node["roles"]) {
            for (const auto& kv : node["roles"]) {
                policy.rules[kv.first.as<std::string>()] = parse_visibility(kv.second.as<std::string>());
            }
        }
    } catch (const Error& e) {
        fail(path, node, e.what());
    }
    if (node["overrides"]) {
        for (const auto& o : node["overrides"]) {
            check_keys(path, o, {"record", "role", "visible"}, "records_policy override");
            RecordOverride ro;
            ro.record_id = required<std::uint64_t>(path, o, "record");
            ro.role = required<std::string>(path, o, "role");
            ro.visible = required<bool>(path, o, "visible");
            policy.overrides.push_back(ro);
        }
    }
    return policy;
}

std::map<std::string, PriceEntry> parse_costs(const fs::path& path, const YAML::Node& node) {
    std::map<std::string, PriceEntry> out;
    if (!node.IsMap()) {
        fail(path, node, "cost_table must be a mapping of model -> prices");
    }
    for (const auto& kv : node) {
        check_keys(path, kv.second, {"prompt_per_1k", "completion_per_1k"}, "cost_table entry");
        PriceEntry p;
        p.prompt_per_1k = required<double>(path, kv.second, "prompt_per_1k");
        p.completion_per_1k = required<double>(path, kv.second, "completion_per_1k");
        out[kv.first.as<std::string>()] = p;
    }
    return out;
}

const std::set<std::string> kScenarioKeys = {
    "id",           "model",          "max_tokens",          "temperature",    "moderator",
    "doctor_prefix", "encounters",    "persona_prompt_dir",  "voice_prompt_dir", "documents_dir",
    "hidden_labs",  "lab_matcher",    "lab_keywords",        "lab_agent",      "scripted_responses",
    "emr_prompt",   "belief_probes",  "records_policy",      "cost_table",     "history_token_budget",
    "closing_marker",
};

fs::path persona_file(const ScenarioConfig& c, const Role& role) { return c.persona_dir / (role + ".txt"); }
fs::path voice_file(const ScenarioConfig& c, const Role& role) { return c.voice_dir / (role + ".txt"); }
fs::path document_file(const ScenarioConfig& c, int id) { return c.documents_dir / (std::to_string(id) + ".txt"); }

std::set<Role> referenced_roles(const ScenarioConfig& config, const std::vector<EncounterSpec>& encounters) {
    std::set<Role> roles{config.moderator_role};
    for (const auto& e : encounters) {
        roles.insert(e.doctor_role);
    }
    return roles;
}

}  // namespace

bool BeliefProbe::operator==(const BeliefProbe& o) const {
    return id == o.id && prompt_template == o.prompt_template && parse_expr == o.parse_expr && kind == o.kind &&
           categories == o.categories && scores == o.scores && min == o.min && max == o.max &&
           schedule == o.schedule && targets == o.targets;
}

void compile_probe(BeliefProbe& probe) {
    if (probe.id.empty()) {
        throw Error("probe id must not be empty");
    }
    if (probe.prompt_template.empty()) {
        throw Error("probe prompt must not be empty");
    }
    std::shared_ptr<std::regex> re;
    try {
        re = std::make_shared<std::regex>(probe.parse_expr, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
        throw Error("invalid parse_expr '" + probe.parse_expr + "': " + e.what());
    }
    if (re->mark_count() < 1) {
        throw Error("parse_expr '" + probe.parse_expr + "' needs a capture group");
    }
    switch (probe.kind) {
    case ResponseKind::Categorical: {
        if (probe.categories.empty()) {
            static const std::regex alternation(R"(\(([^()|?]+(?:\|[^()|]+)+)\))");
            std::smatch m;
            if (std::regex_search(probe.parse_expr, m, alternation)) {
                for (const auto& c : split(m[1].str(), '|')) {
                    probe.categories.push_back(to_lower(trim(c)));
                }
            }
        } else {
            for (auto& c : probe.categories) {
                c = to_lower(trim(c));
            }
        }
        if (probe.categories.empty()) {
            throw Error("categorical probe '" + probe.id + "' declares no categories");
        }
        std::set<std::string> unique(probe.categories.begin(), probe.categories.end());
        if (unique.size() != probe.categories.size()) {
            throw Error("categorical probe '" + probe.id + "' repeats a category");
        }
        if (!probe.scores.empty()) {
            std::map<std::string, double> lowered;
            for (const auto& [k, v] : probe.scores) {
                lowered[to_lower(trim(k))] = v;
            }
            probe.scores = lowered;
            std::optional<double> previous;
            for (const auto& c : probe.categories) {
                auto it = probe.scores.find(c);
                if (it == probe.scores.end()) {
                    throw Error("score table misses category '" + c + "'");
                }
                if (previous && !(it->second > *previous)) {
                    throw Error("score table must increase strictly along the category order");
                }
                previous = it->second;
            }
            if (probe.scores.size() != probe.categories.size()) {
                throw Error("score table names a category the probe does not declare");
            }
        }
        break;
    }
    case ResponseKind::Numeric:
        if (!(probe.min < probe.max)) {
            throw Error("numeric probe '" + probe.id + "' needs min < max");
        }
        break;
    case ResponseKind::FreeformList:
        break;
    }
    probe.compiled = std::move(re);
}

Visibility RecordsPolicy::class_for(const Role& role) const {
    if (auto it = rules.find(role); it != rules.end()) {
        return it->second;
    }
    return default_class;
}

bool RecordsPolicy::permits(const Role& viewer, const Role& author, std::uint64_t record_id) const {
    for (const auto& o : overrides) {
        if (o.record_id == record_id && o.role == viewer) {
            return o.visible;
        }
    }
    switch (class_for(viewer)) {
    case Visibility::FullRecord:
        return true;
    case Visibility::OwnAuthoredOnly:
        return author == viewer;
    case Visibility::None:
        return false;
    }
    return false;
}

std::map<std::string, std::string> HiddenLabSet::unreleased() const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : entries) {
        if (!released.contains(k)) {
            out.emplace(k, v);
        }
    }
    return out;
}

const std::string& default_emr_prompt() {
    static const std::string prompt =
        "Write the official EMR note for this visit as the {{role}}. Use exactly these section headers, "
        "each on its own line: Subjective:, Findings:, Labs:, Assessment:, Plan:. List every test you "
        "order under Plan.";
    return prompt;
}

std::string to_string(ResponseKind kind) {
    switch (kind) {
    case ResponseKind::Categorical: return "categorical";
    case ResponseKind::Numeric: return "numeric";
    case ResponseKind::FreeformList: return "freeform-list";
    }
    return "categorical";
}

std::string to_string(ProbeSchedule schedule) {
    switch (schedule) {
    case ProbeSchedule::PreEncounter: return "pre-encounter";
    case ProbeSchedule::PostEncounter: return "post-encounter";
    case ProbeSchedule::OnDemand: return "on-demand";
    }
    return "post-encounter";
}

std::string to_string(Visibility visibility) {
    switch (visibility) {
    case Visibility::FullRecord: return "full-record";
    case Visibility::OwnAuthoredOnly: return "own-authored-only";
    case Visibility::None: return "none";
    }
    return "none";
}

std::string to_string(LabMatcherKind kind) { return kind == LabMatcherKind::Llm ? "llm" : "keyword-table"; }

ResponseKind parse_response_kind(const std::string& s) {
    if (s == "categorical") return ResponseKind::Categorical;
    if (s == "numeric") return ResponseKind::Numeric;
    if (s == "freeform-list" || s == "list") return ResponseKind::FreeformList;
    throw Error("unknown probe kind '" + s + "'");
}

ProbeSchedule parse_schedule(const std::string& s) {
    if (s == "pre-encounter") return ProbeSchedule::PreEncounter;
    if (s == "post-encounter") return ProbeSchedule::PostEncounter;
    if (s == "on-demand") return ProbeSchedule::OnDemand;
    throw Error("unknown probe schedule '" + s + "'");
}

Visibility parse_visibility(const std::string& s) {
    if (s == "full-record") return Visibility::FullRecord;
    if (s == "own-authored-only") return Visibility::OwnAuthoredOnly;
    if (s == "none") return Visibility::None;
    throw Error("unknown visibility class '" + s + "'");
}

std::vector<EncounterSpec> load_encounters(const fs::path& path, const std::function<bool(const Role&)>& role_known) {
    const auto doc = load_yaml(path);
    std::vector<EncounterSpec> out;
    if (!doc || doc.IsNull()) {
        return out;
    }
    if (!doc.IsSequence()) {
        fail(path, doc, "encounters file must be a list of encounters");
    }
    std::map<int, YAML::Node> seen;
    for (const auto& node : doc) {
        check_keys(path, node,
                   {"id", "doctor", "doctor_preread", "lab_results", "doctor_context", "moderator_context",
                    "reason_for_visit", "max_turns"},
                   "encounter");
        EncounterSpec e;
        e.encounter_id = required<int>(path, node, "id");
        if (e.encounter_id <= 0) {
            fail(path, node["id"], "encounter id must be positive");
        }
        if (seen.contains(e.encounter_id)) {
            fail(path, node["id"], "duplicate encounter id " + std::to_string(e.encounter_id));
        }
        seen.emplace(e.encounter_id, node);
        e.doctor_role = required<std::string>(path, node, "doctor");
        if (role_known && !role_known(e.doctor_role)) {
            fail(path, node["doctor"], "unknown doctor role '" + e.doctor_role + "'");
        }
        if (node["doctor_preread"]) {
            e.doctor_preread = get_as<std::vector<int>>(path, node["doctor_preread"], "doctor_preread");
            for (int id : e.doctor_preread) {
                if (id < 0) {
                    fail(path, node["doctor_preread"], "document ids are non-negative");
                }
            }
        }
        if (node["lab_results"] && !node["lab_results"].IsNull()) {
            for (const auto& lab : node["lab_results"]) {
                check_keys(path, lab, {"test", "result"}, "lab result");
                LabResult r{trim(required<std::string>(path, lab, "test")),
                            trim(required<std::string>(path, lab, "result"))};
                if (r.test.empty() || r.result.empty()) {
                    fail(path, lab, "lab result needs a test name and a result");
                }
                e.in_visit_labs.push_back(std::move(r));
            }
        }
        e.doctor_context = trim_right(optional_or<std::string>(path, node, "doctor_context", ""));
        e.moderator_context = trim_right(optional_or<std::string>(path, node, "moderator_context", ""));
        e.reason_for_visit = trim(optional_or<std::string>(path, node, "reason_for_visit", ""));
        if (e.reason_for_visit.empty()) {
            fail(path, node, "encounter " + std::to_string(e.encounter_id) + " has an empty reason_for_visit");
        }
        e.max_turns = optional_or<int>(path, node, "max_turns", 4);
        if (e.max_turns <= 0) {
            fail(path, node["max_turns"], "max_turns must be positive");
        }
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(),
              [](const EncounterSpec& a, const EncounterSpec& b) { return a.encounter_id < b.encounter_id; });
    return out;
}

HiddenLabSet load_hidden_labs(const fs::path& path) {
    const auto doc = load_yaml(path);
    HiddenLabSet set;
    if (!doc || doc.IsNull()) {
        return set;
    }
    if (!doc.IsMap()) {
        fail(path, doc, "hidden labs file must map lab keys to result text");
    }
    for (const auto& kv : doc) {
        const auto key = kv.first.as<std::string>();
        if (set.entries.contains(key)) {
            fail(path, kv.first, "duplicate hidden lab key '" + key + "'");
        }
        const auto text = trim_right(get_as<std::string>(path, kv.second, "hidden lab '" + key + "'"));
        if (trim(text).empty()) {
            fail(path, kv.first, "hidden lab '" + key + "' has an empty result");
        }
        set.entries.emplace(key, text);
    }
    return set;
}

std::map<std::string, std::vector<std::string>> load_lab_keywords(const fs::path& path) {
    const auto doc = load_yaml(path);
    std::map<std::string, std::vector<std::string>> out;
    if (!doc || doc.IsNull()) {
        return out;
    }
    if (!doc.IsMap()) {
        fail(path, doc, "lab keyword table must map lab keys to phrase lists");
    }
    for (const auto& kv : doc) {
        const auto key = kv.first.as<std::string>();
        if (out.contains(key)) {
            fail(path, kv.first, "duplicate lab key '" + key + "'");
        }
        out[key] = get_as<std::vector<std::string>>(path, kv.second, "phrases for '" + key + "'");
    }
    return out;
}

ScenarioConfig load_scenario(const fs::path& config_path, std::optional<int> scenario_id) {
    const auto doc = load_yaml(config_path);
    check_keys(config_path, doc, {"default", "summaries", "scenarios", "cost_table"}, "config");
    const auto root = scenario_root_for(config_path);

    const int wanted =
        scenario_id ? *scenario_id : optional_or<int>(config_path, doc, "default", std::numeric_limits<int>::min());
    const auto scenarios = doc["scenarios"];
    if (!scenarios || !scenarios.IsSequence()) {
        fail(config_path, doc, "config needs a 'scenarios' list");
    }
    YAML::Node chosen;
    for (const auto& s : scenarios) {
        if (!s.IsMap()) {
            fail(config_path, s, "scenario entry must be a mapping");
        }
        if ((wanted == std::numeric_limits<int>::min() && !chosen) ||
            (s["id"] && get_as<int>(config_path, s["id"], "id") == wanted)) {
            chosen.reset(s);
            if (wanted != std::numeric_limits<int>::min()) {
                break;
            }
        }
    }
    if (!chosen) {
        fail(config_path, scenarios, "no scenario with id " + std::to_string(wanted));
    }
    check_keys(config_path, chosen, kScenarioKeys, "scenario");

    ScenarioConfig c;
    c.scenario_id = required<int>(config_path, chosen, "id");
    c.model_id = required<std::string>(config_path, chosen, "model");
    c.max_tokens = required<int>(config_path, chosen, "max_tokens");
    if (c.max_tokens <= 0) {
        fail(config_path, chosen["max_tokens"], "max_tokens must be positive");
    }
    c.temperature = optional_or<double>(config_path, chosen, "temperature", 0.0);
    if (c.temperature < 0.0 || c.temperature > 2.0) {
        fail(config_path, chosen["temperature"], "temperature must lie in [0, 2]");
    }
    c.moderator_role = required<std::string>(config_path, chosen, "moderator");
    c.doctor_prefix = trim_right(optional_or<std::string>(config_path, chosen, "doctor_prefix", ""));
    c.persona_dir = resolve(root, required<std::string>(config_path, chosen, "persona_prompt_dir"));
    c.voice_dir = resolve(root, required<std::string>(config_path, chosen, "voice_prompt_dir"));
    c.summaries_dir = resolve(root, optional_or<std::string>(config_path, doc, "summaries", "summaries"));
    if (chosen["documents_dir"]) {
        c.documents_dir = resolve(root, required<std::string>(config_path, chosen, "documents_dir"));
    }
    c.encounters_path = resolve(root, required<std::string>(config_path, chosen, "encounters"));
    if (chosen["hidden_labs"]) {
        c.hidden_labs_path = resolve(root, required<std::string>(config_path, chosen, "hidden_labs"));
    }
    if (chosen["lab_keywords"]) {
        c.lab_keywords_path = resolve(root, required<std::string>(config_path, chosen, "lab_keywords"));
    }
    if (chosen["scripted_responses"]) {
        c.scripted_responses_path = resolve(root, required<std::string>(config_path, chosen, "scripted_responses"));
    }
    const auto matcher = optional_or<std::string>(config_path, chosen, "lab_matcher", "llm");
    if (matcher == "llm") {
        c.lab_matcher = LabMatcherKind::Llm;
    } else if (matcher == "keyword-table") {
        c.lab_matcher = LabMatcherKind::KeywordTable;
    } else {
        fail(config_path, chosen["lab_matcher"], "lab_matcher must be 'llm' or 'keyword-table'");
    }
    c.lab_role = optional_or<std::string>(config_path, chosen, "lab_agent", "lab");
    c.emr_prompt = trim_right(optional_or<std::string>(config_path, chosen, "emr_prompt", default_emr_prompt()));
    c.history_token_budget = optional_or<int>(config_path, chosen, "history_token_budget", 4000);
    if (c.history_token_budget <= 0) {
        fail(config_path, chosen["history_token_budget"], "history_token_budget must be positive");
    }
    c.closing_marker = optional_or<std::string>(config_path, chosen, "closing_marker", "[END VISIT]");
    if (chosen["belief_probes"]) {
        std::set<std::string> ids;
        for (const auto& p : chosen["belief_probes"]) {
            auto probe = parse_probe(config_path, p);
            if (!ids.insert(probe.id).second) {
                fail(config_path, p, "duplicate probe id '" + probe.id + "'");
            }
            c.belief_probes.push_back(std::move(probe));
        }
    }
    if (chosen["records_policy"]) {
        c.records_policy = parse_policy(config_path, chosen["records_policy"]);
    }
    if (!c.records_policy.rules.contains(c.moderator_role)) {
        c.records_policy.rules[c.moderator_role] = Visibility::None;
    }
    if (doc["cost_table"]) {
        c.cost_table = parse_costs(config_path, doc["cost_table"]);
    }
    if (chosen["cost_table"]) {
        for (auto& [k, v] : parse_costs(config_path, chosen["cost_table"])) {
            c.cost_table[k] = v;
        }
    }

    for (const auto& [label, p] : {std::pair{"encounters", c.encounters_path}, {"hidden_labs", c.hidden_labs_path},
                                   {"lab_keywords", c.lab_keywords_path},
                                   {"scripted_responses", c.scripted_responses_path}}) {
        if (!p.empty() && !fs::exists(p)) {
            fail(config_path, chosen[label], std::string(label) + " file not found: " + p.string());
        }
    }
    if (c.lab_matcher == LabMatcherKind::KeywordTable && !c.hidden_labs_path.empty() && c.lab_keywords_path.empty()) {
        fail(config_path, chosen, "keyword-table lab matcher needs a lab_keywords file");
    }

    const auto encounters = load_encounters(c.encounters_path);
    for (const auto& role : referenced_roles(c, encounters)) {
        if (!fs::exists(persona_file(c, role))) {
            fail(config_path, chosen, "dangling role reference: no persona file for role '" + role + "' (" +
                                          persona_file(c, role).string() + ")");
        }
        if (!fs::exists(voice_file(c, role))) {
            fail(config_path, chosen, "dangling role reference: no voice file for role '" + role + "' (" +
                                          voice_file(c, role).string() + ")");
        }
    }
    for (const auto& e : encounters) {
        for (int id : e.doctor_preread) {
            if (id == kGlobalDocumentId) {
                continue;
            }
            if (c.documents_dir.empty() || !fs::exists(document_file(c, id))) {
                fail(config_path, chosen, "encounter " + std::to_string(e.encounter_id) + " prereads missing document " +
                                              std::to_string(id));
            }
        }
    }
    if (!c.hidden_labs_path.empty()) {
        (void)load_hidden_labs(c.hidden_labs_path);
    }
    return c;
}

std::string dump_scenario(const ScenarioConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    auto q = [&](const std::string& s) -> YAML::Emitter& { return out << YAML::DoubleQuoted << s; };
    out << YAML::BeginMap;
    out << YAML::Key << "default" << YAML::Value << c.scenario_id;
    out << YAML::Key << "summaries" << YAML::Value;
    q(c.summaries_dir.string());
    out << YAML::Key << "scenarios" << YAML::Value << YAML::BeginSeq << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << c.scenario_id;
    out << YAML::Key << "model" << YAML::Value;
    q(c.model_id);
    out << YAML::Key << "max_tokens" << YAML::Value << c.max_tokens;
    out << YAML::Key << "temperature" << YAML::Value << c.temperature;
    out << YAML::Key << "moderator" << YAML::Value;
    q(c.moderator_role);
    out << YAML::Key << "doctor_prefix" << YAML::Value;
    q(c.doctor_prefix);
    out << YAML::Key << "encounters" << YAML::Value;
    q(c.encounters_path.string());
    out << YAML::Key << "persona_prompt_dir" << YAML::Value;
    q(c.persona_dir.string());
    out << YAML::Key << "voice_prompt_dir" << YAML::Value;
    q(c.voice_dir.string());
    auto opt_path = [&](const char* key, const fs::path& p) {
        if (!p.empty()) {
            out << YAML::Key << key << YAML::Value;
            q(p.string());
        }
    };
    opt_path("documents_dir", c.documents_dir);
    opt_path("hidden_labs", c.hidden_labs_path);
    opt_path("lab_keywords", c.lab_keywords_path);
    opt_path("scripted_responses", c.scripted_responses_path);
    out << YAML::Key << "lab_matcher" << YAML::Value << to_string(c.lab_matcher);
    out << YAML::Key << "lab_agent" << YAML::Value;
    q(c.lab_role);
    out << YAML::Key << "emr_prompt" << YAML::Value;
    q(c.emr_prompt);
    out << YAML::Key << "history_token_budget" << YAML::Value << c.history_token_budget;
    out << YAML::Key << "closing_marker" << YAML::Value;
    q(c.closing_marker);

    out << YAML::Key << "belief_probes" << YAML::Value << YAML::BeginSeq;
    for (const auto& p : c.belief_probes) {
        out << YAML::BeginMap;
        out << YAML::Key << "id" << YAML::Value;
        q(p.id);
        out << YAML::Key << "prompt" << YAML::Value;
        q(p.prompt_template);
        out << YAML::Key << "parse_expr" << YAML::Value;
        q(p.parse_expr);
        out << YAML::Key << "kind" << YAML::Value << to_string(p.kind);
        if (!p.categories.empty()) {
            out << YAML::Key << "categories" << YAML::Value << YAML::Flow << p.categories;
        }
        if (!p.scores.empty()) {
            out << YAML::Key << "scores" << YAML::Value << YAML::BeginMap;
            for (const auto& [k, v] : p.scores) {
                out << YAML::Key << k << YAML::Value << v;
            }
            out << YAML::EndMap;
        }
        out << YAML::Key << "range" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.min << p.max << YAML::EndSeq;
        out << YAML::Key << "schedule" << YAML::Value << to_string(p.schedule);
        out << YAML::Key << "targets" << YAML::Value << YAML::Flow << p.targets;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "records_policy" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "default" << YAML::Value << to_string(c.records_policy.default_class);
    out << YAML::Key << "roles" << YAML::Value << YAML::BeginMap;
    for (const auto& [role, vis] : c.records_policy.rules) {
        out << YAML::Key << role << YAML::Value << to_string(vis);
    }
    out << YAML::EndMap;
    out << YAML::Key << "overrides" << YAML::Value << YAML::BeginSeq;
    for (const auto& o : c.records_policy.overrides) {
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "record" << YAML::Value << o.record_id << YAML::Key
            << "role" << YAML::Value << o.role << YAML::Key << "visible" << YAML::Value << o.visible << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;

    out << YAML::Key << "cost_table" << YAML::Value << YAML::BeginMap;
    for (const auto& [model, price] : c.cost_table) {
        out << YAML::Key << model << YAML::Value << YAML::BeginMap << YAML::Key << "prompt_per_1k" << YAML::Value
            << price.prompt_per_1k << YAML::Key << "completion_per_1k" << YAML::Value << price.completion_per_1k
            << YAML::EndMap;
    }
    out << YAML::EndMap;
    out << YAML::EndMap << YAML::EndSeq << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

const EncounterSpec& Scenario::encounter(int encounter_id) const {
    for (const auto& e : encounters) {
        if (e.encounter_id == encounter_id) {
            return e;
        }
    }
    throw Error("scenario has no encounter " + std::to_string(encounter_id));
}

std::string Scenario::document(int doc_id) const {
    if (doc_id == kGlobalDocumentId) {
        return global_document;
    }
    if (config.documents_dir.empty()) {
        throw Error("scenario has no documents directory");
    }
    return read_text_file(document_file(config, doc_id));
}

std::vector<Role> Scenario::specialist_roles() const {
    std::vector<Role> out;
    for (const auto& [role, _] : agents) {
        if (role != config.moderator_role) {
            out.push_back(role);
        }
    }
    return out;
}

Scenario make_scenario_bundle(const ScenarioConfig& config) {
    Scenario s;
    s.config = config;
    s.encounters = load_encounters(config.encounters_path);
    for (const auto& role : referenced_roles(config, s.encounters)) {
        AgentSpec agent;
        agent.role = role;
        agent.persona_text = trim_right(read_text_file(persona_file(config, role)));
        agent.voice_text = trim_right(read_text_file(voice_file(config, role)));
        s.agents.emplace(role, std::move(agent));
    }
    if (!config.hidden_labs_path.empty()) {
        s.hidden_labs = load_hidden_labs(config.hidden_labs_path);
    }
    if (!config.lab_keywords_path.empty()) {
        s.lab_keywords = load_lab_keywords(config.lab_keywords_path);
    }
    if (const auto lab = persona_file(config, config.lab_role); fs::exists(lab)) {
        s.lab_persona = trim_right(read_text_file(lab));
    } else {
        s.lab_persona = "You are a clinical laboratory. You are conservative and precise.";
    }
    if (!config.documents_dir.empty() && fs::exists(document_file(config, kGlobalDocumentId))) {
        s.global_document = trim_right(read_text_file(document_file(config, kGlobalDocumentId)));
    }
    return s;
}

Scenario load_scenario_bundle(const fs::path& config_path, std::optional<int> scenario_id) {
    return make_scenario_bundle(load_scenario(config_path, scenario_id));
}

}  // namespace whai
