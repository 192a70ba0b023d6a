#include "whai/belief.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <regex>

namespace whai {

std::string to_string(ProbePhase phase) {
    switch (phase) {
    case ProbePhase::Pre: return "pre";
    case ProbePhase::Post: return "post";
    case ProbePhase::OnDemand: return "on-demand";
    }
    return "post";
}

ProbePhase parse_phase(const std::string& s) {
    if (s == "pre") return ProbePhase::Pre;
    if (s == "post") return ProbePhase::Post;
    if (s == "on-demand") return ProbePhase::OnDemand;
    throw Error("unknown probe phase '" + s + "'");
}

std::string BeliefObservation::display_value() const {
    if (category) {
        return *category;
    }
    if (number) {
        return format_fixed(*number, 2);
    }
    if (!ranked.empty()) {
        return ranked.front();
    }
    return "";
}

const std::map<std::string, double>& default_stance_scores() {
    static const std::map<std::string, double> table = {
        {"rejects", 0.0}, {"skeptical", 3.0}, {"neutral", 5.0}, {"believes", 8.0}};
    return table;
}

void validate_score_table(const std::vector<std::string>& categories, const std::map<std::string, double>& scores) {
    double prev = -1.0;
    bool first = true;
    for (const auto& c : categories) {
        auto it = scores.find(c);
        if (it == scores.end()) {
            throw Error("score table has no entry for category '" + c + "'");
        }
        if (it->second < 0.0 || it->second > 10.0) {
            throw Error("score for '" + c + "' is outside [0, 10]");
        }
        if (!first && it->second <= prev) {
            throw Error("score table must strictly increase along the category order");
        }
        prev = it->second;
        first = false;
    }
}

std::optional<std::map<std::string, double>> score_table_for(const BeliefProbe& probe) {
    if (probe.kind != ResponseKind::Categorical) {
        return std::nullopt;
    }
    if (!probe.scores.empty()) {
        return probe.scores;
    }
    const auto& def = default_stance_scores();
    if (probe.categories.empty()) {
        return std::nullopt;
    }
    for (const auto& c : probe.categories) {
        if (!def.contains(c)) {
            return std::nullopt;
        }
    }
    return def;
}

double map_stance_to_score(const std::string& category, const std::map<std::string, double>& table) {
    auto it = table.find(to_lower(trim(category)));
    if (it == table.end()) {
        throw Error("unknown category '" + category + "'");
    }
    return it->second;
}

namespace {

std::string clean_item(std::string_view raw) {
    std::string s = trim(raw);
    // Leading list markers: "1.", "2)", "-", "*", "•".
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        ++i;
    }
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
        s = s.substr(i + 1);
    } else if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
        s = s.substr(1);
    } else if (s.rfind("\xE2\x80\xA2", 0) == 0) {
        s = s.substr(3);
    }
    s = trim(s);
    while (!s.empty() && (s.front() == '*' || s.front() == '_')) {
        s.erase(s.begin());
    }
    while (!s.empty() && (s.back() == '*' || s.back() == '_' || s.back() == '.' || s.back() == ',' ||
                          s.back() == ';')) {
        s.pop_back();
    }
    return trim(s);
}

}  // namespace

std::vector<std::string> split_ranked_list(std::string_view text) {
    static const std::regex numbered(R"((?:^|\s)\d{1,2}[.)]\s+)");
    std::string normalized(text);
    // Put every numbered marker on its own line so inline lists split too.
    normalized = std::regex_replace(normalized, numbered, "\n$&");
    std::vector<std::string> out;
    const bool numbered_list = std::regex_search(std::string(text), numbered);
    for (const auto& line : split(normalized, '\n')) {
        std::vector<std::string> pieces;
        if (numbered_list) {
            pieces.push_back(line);
        } else {
            for (const auto& part : split(line, ';')) {
                for (const auto& p : split(part, ',')) {
                    pieces.push_back(p);
                }
            }
        }
        for (const auto& p : pieces) {
            auto item = clean_item(p);
            if (!item.empty()) {
                out.push_back(std::move(item));
            }
        }
    }
    return out;
}

BeliefObservation parse_belief(const BeliefProbe& probe, const std::string& raw_response) {
    BeliefObservation obs;
    obs.probe_id = probe.id;
    obs.raw_response = raw_response;
    obs.kind = probe.kind;

    std::regex fallback;
    const std::regex* re = probe.compiled.get();
    if (re == nullptr) {
        fallback = std::regex(probe.parse_expr, std::regex::ECMAScript | std::regex::icase);
        re = &fallback;
    }
    std::smatch m;
    if (!std::regex_search(raw_response, m, *re) || m.size() < 2 || !m[1].matched) {
        obs.parse_failed = true;
        return obs;
    }
    const std::string captured = trim(m.str(1));

    switch (probe.kind) {
    case ResponseKind::Categorical: {
        const auto c = to_lower(captured);
        if (!probe.categories.empty() &&
            std::find(probe.categories.begin(), probe.categories.end(), c) == probe.categories.end()) {
            obs.parse_failed = true;
            return obs;
        }
        obs.category = c;
        if (auto table = score_table_for(probe)) {
            obs.score = map_stance_to_score(c, *table);
        }
        break;
    }
    case ResponseKind::Numeric: {
        double value = 0.0;
        const auto* begin = captured.data();
        const auto* end = begin + captured.size();
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc() || ptr == begin || value < probe.min || value > probe.max) {
            obs.parse_failed = true;
            return obs;
        }
        obs.number = value;
        obs.score = (value - probe.min) / (probe.max - probe.min) * 10.0;
        break;
    }
    case ResponseKind::FreeformList: {
        obs.ranked = split_ranked_list(captured);
        if (obs.ranked.empty()) {
            obs.parse_failed = true;
        }
        break;
    }
    }
    return obs;
}

}  // namespace whai
