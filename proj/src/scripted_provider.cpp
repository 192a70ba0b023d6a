#include "whai/error.hpp"
#include "whai/providers.hpp"
#include "whai/util.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <limits>
#include <set>

namespace fs = std::filesystem;

namespace whai {

namespace {

std::string joined_context(const CompletionRequest& request) {
    std::string out;
    for (const auto& m : request.messages) {
        out += m.content;
        out += '\n';
    }
    return out;
}

const std::string* last_user_message(const CompletionRequest& request) {
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == MessageRole::User) {
            return &it->content;
        }
    }
    return nullptr;
}

std::vector<std::string> string_list(const YAML::Node& node) {
    std::vector<std::string> out;
    if (!node) {
        return out;
    }
    if (node.IsScalar()) {
        out.push_back(node.as<std::string>());
    } else {
        for (const auto& n : node) {
            out.push_back(n.as<std::string>());
        }
    }
    return out;
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
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.contains(key)) {
            fail(path, kv.first, "unknown key '" + key + "' in " + what);
        }
    }
}

ScoreRule parse_score(const fs::path& path, const YAML::Node& node) {
    check_keys(path, node, {"base", "add", "jitter", "min", "max", "bands"}, "score rule");
    ScoreRule s;
    s.base = node["base"] ? node["base"].as<int>() : 0;
    s.jitter = node["jitter"] ? node["jitter"].as<int>() : 0;
    s.min = node["min"] ? node["min"].as<int>() : 0;
    s.max = node["max"] ? node["max"].as<int>() : 10;
    if (s.jitter < 0 || s.min > s.max) {
        fail(path, node, "score rule needs jitter >= 0 and min <= max");
    }
    for (const auto& t : node["add"]) {
        check_keys(path, t, {"contains", "value"}, "score term");
        s.add.push_back({t["contains"].as<std::string>(), t["value"].as<int>()});
    }
    int prev = std::numeric_limits<int>::min();
    for (const auto& b : node["bands"]) {
        check_keys(path, b, {"upto", "label"}, "score band");
        ScoreRule::Band band{b["upto"].as<int>(), b["label"].as<std::string>()};
        if (band.upto <= prev) {
            fail(path, b, "score bands must increase");
        }
        prev = band.upto;
        s.bands.push_back(band);
    }
    return s;
}

}  // namespace

int ScoreRule::evaluate(const CompletionRequest& request) const {
    const auto context = joined_context(request);
    int value = base;
    for (const auto& t : add) {
        if (context.find(t.contains) != std::string::npos) {
            value += t.value;
        }
    }
    if (jitter > 0) {
        const auto digest = cache_key(request);
        const int byte = std::stoi(digest.substr(0, 2), nullptr, 16);
        value += byte % (2 * jitter + 1) - jitter;
    }
    return std::clamp(value, min, max);
}

std::string ScoreRule::stance_for(int score) const {
    for (const auto& b : bands) {
        if (score <= b.upto) {
            return b.label;
        }
    }
    return bands.empty() ? std::to_string(score) : bands.back().label;
}

bool ScriptRule::matches(const CompletionRequest& request) const {
    for (const auto& [key, value] : when) {
        auto it = request.annotations.find(key);
        if (it == request.annotations.end() || it->second != value) {
            return false;
        }
    }
    if (last_user_matches) {
        const auto* last = last_user_message(request);
        if (last == nullptr || !std::regex_search(*last, *last_user_matches)) {
            return false;
        }
    }
    if (!context_contains.empty() || !context_lacks.empty()) {
        const auto context = joined_context(request);
        for (const auto& phrase : context_contains) {
            if (context.find(phrase) == std::string::npos) {
                return false;
            }
        }
        for (const auto& phrase : context_lacks) {
            if (context.find(phrase) != std::string::npos) {
                return false;
            }
        }
    }
    return true;
}

ScriptedProvider::ScriptedProvider(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const fs::path& path) {
    if (!fs::exists(path)) {
        throw ConfigError(path, "file not found");
    }
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError(path, e.mark.line + 1, e.mark.column + 1, e.msg);
    }
    check_keys(path, root, {"rules"}, "script");
    std::vector<ScriptRule> rules;
    for (const auto& node : root["rules"]) {
        check_keys(path, node, {"when", "respond", "respond_file", "score"}, "rule");
        ScriptRule rule;
        if (const auto when = node["when"]) {
            if (!when.IsMap()) {
                fail(path, when, "'when' must be a mapping");
            }
            for (const auto& kv : when) {
                const auto key = kv.first.as<std::string>();
                if (key == "last_user_matches") {
                    rule.last_user_pattern = kv.second.as<std::string>();
                    try {
                        rule.last_user_matches.emplace(rule.last_user_pattern,
                                                       std::regex::ECMAScript | std::regex::icase);
                    } catch (const std::regex_error& e) {
                        fail(path, kv.second, std::string("invalid regular expression: ") + e.what());
                    }
                } else if (key == "context_contains") {
                    rule.context_contains = string_list(kv.second);
                } else if (key == "context_lacks") {
                    rule.context_lacks = string_list(kv.second);
                } else {
                    rule.when[key] = kv.second.as<std::string>();
                }
            }
        }
        const int sources = (node["respond"] ? 1 : 0) + (node["respond_file"] ? 1 : 0);
        if (sources > 1) {
            fail(path, node, "rule has both respond and respond_file");
        }
        if (node["respond"]) {
            rule.respond = node["respond"].as<std::string>();
        } else if (node["respond_file"]) {
            const auto file = path.parent_path() / node["respond_file"].as<std::string>();
            if (!fs::exists(file)) {
                fail(path, node["respond_file"], "response file not found: " + file.string());
            }
            rule.respond = read_text_file(file);
        }
        if (node["score"]) {
            rule.score = parse_score(path, node["score"]);
            if (rule.respond.empty()) {
                rule.respond = "Belief: {{score}}";
            }
        }
        if (sources == 0 && !rule.score) {
            fail(path, node, "rule has no response");
        }
        rules.push_back(std::move(rule));
    }
    return std::make_shared<ScriptedProvider>(std::move(rules));
}

Usage scripted_usage(const CompletionRequest& request, const std::string& content) {
    Usage u;
    for (const auto& m : request.messages) {
        u.prompt_tokens += estimate_tokens(m.content) + 3;
    }
    u.completion_tokens = estimate_tokens(content);
    return u;
}

CompletionResponse ScriptedProvider::complete(const CompletionRequest& request) {
    for (const auto& rule : rules_) {
        if (!rule.matches(request)) {
            continue;
        }
        std::map<std::string, std::string> vars = request.annotations;
        vars["context_digest"] = cache_key(request).substr(0, 8);
        if (rule.score) {
            const int s = rule.score->evaluate(request);
            vars["score"] = std::to_string(s);
            vars["stance"] = rule.score->stance_for(s);
        }
        CompletionResponse r;
        r.content = render_template(rule.respond, vars);
        r.usage = scripted_usage(request, r.content);
        r.provenance = Provenance::Scripted;
        ++calls_;
        return r;
    }
    std::string where;
    for (const auto& [k, v] : request.annotations) {
        where += (where.empty() ? "" : " ") + k + "=" + v;
    }
    throw ScriptMissError("no scripted rule matches request {" + where + "}");
}

}  // namespace whai
