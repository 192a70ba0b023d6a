#include "whai/emr.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include <array>
#include <cctype>

namespace whai {

namespace {

constexpr std::array<std::string_view, 5> kSectionNames = {"subjective", "findings", "labs", "assessment", "plan"};

std::string* section_slot(EmrSections& s, std::size_t index) {
    switch (index) {
    case 0: return &s.subjective;
    case 1: return &s.findings;
    case 2: return &s.labs;
    case 3: return &s.assessment;
    default: return &s.plan;
    }
}

// Recognises "Plan:", "**Plan:**", "## Plan", "PLAN" and returns the section
// index plus any text after the header on the same line.
std::optional<std::pair<std::size_t, std::string>> match_header(std::string_view line) {
    std::size_t i = 0;
    auto skip = [&](auto pred) {
        while (i < line.size() && pred(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
    };
    skip([](unsigned char c) { return c == ' ' || c == '\t' || c == '#' || c == '*' || c == '_'; });
    for (std::size_t k = 0; k < kSectionNames.size(); ++k) {
        const auto name = kSectionNames[k];
        if (line.size() - i < name.size()) {
            continue;
        }
        if (to_lower(line.substr(i, name.size())) != name) {
            continue;
        }
        std::size_t j = i + name.size();
        if (j < line.size() && std::isalnum(static_cast<unsigned char>(line[j]))) {
            continue;
        }
        bool colon = false;
        while (j < line.size() && (line[j] == '*' || line[j] == '_' || line[j] == ':' || line[j] == ' ')) {
            colon = colon || line[j] == ':';
            ++j;
        }
        const auto rest = trim(line.substr(j));
        // A bare word without a colon only counts when it is alone on the line.
        if (!colon && !rest.empty()) {
            continue;
        }
        return std::make_pair(k, rest);
    }
    return std::nullopt;
}

void append_line(std::string& slot, std::string_view text) {
    if (!slot.empty()) {
        slot += '\n';
    }
    slot += text;
}

}  // namespace

EmrSections parse_sections(std::string_view body) {
    EmrSections s;
    std::size_t current = 3;
    for (const auto& raw : split(body, '\n')) {
        const auto line = trim_right(raw);
        if (auto header = match_header(line)) {
            current = header->first;
            if (!header->second.empty()) {
                append_line(*section_slot(s, current), header->second);
            }
            continue;
        }
        auto* slot = section_slot(s, current);
        if (slot->empty() && trim(line).empty()) {
            continue;
        }
        append_line(*slot, line);
    }
    for (std::size_t k = 0; k < kSectionNames.size(); ++k) {
        auto* slot = section_slot(s, k);
        *slot = trim(*slot);
    }
    return s;
}

std::string format_sections(const EmrSections& s) {
    std::string out;
    const std::array<std::pair<const char*, const std::string*>, 5> parts = {{
        {"Subjective", &s.subjective},
        {"Findings", &s.findings},
        {"Labs", &s.labs},
        {"Assessment", &s.assessment},
        {"Plan", &s.plan},
    }};
    for (const auto& [name, text] : parts) {
        if (text->empty()) {
            continue;
        }
        if (!out.empty()) {
            out += '\n';
        }
        out += std::string(name) + ": " + *text + '\n';
    }
    return out;
}

bool VisibilityOverlay::hides(const Role& viewer, std::uint64_t record_id) const {
    if (hidden_record_ids.contains(record_id)) {
        return true;
    }
    auto it = hidden_for_role.find(viewer);
    return it != hidden_for_role.end() && it->second.contains(record_id);
}

std::vector<EmrRecord> visible_records(const std::vector<EmrRecord>& records, const Role& viewer, LogicalTime at,
                                       const RecordsPolicy& policy, const VisibilityOverlay& overlay) {
    std::vector<EmrRecord> out;
    for (const auto& r : records) {
        if (r.sim_time > at) {
            continue;
        }
        if (!policy.permits(viewer, r.author_role, r.record_id)) {
            continue;
        }
        if (overlay.hides(viewer, r.record_id)) {
            continue;
        }
        out.push_back(r);
    }
    return out;
}

std::uint64_t EmrStore::append(EmrRecord record) {
    record.record_id = records_.size() + 1;
    if (!records_.empty() && record.sim_time < records_.back().sim_time &&
        !record.has_tag(kTagCounterfactual)) {
        throw Error("EMR append out of time order");
    }
    records_.push_back(std::move(record));
    return records_.back().record_id;
}

const EmrRecord& EmrStore::get(std::uint64_t record_id) const {
    if (record_id == 0 || record_id > records_.size()) {
        throw Error("no EMR record " + std::to_string(record_id));
    }
    return records_[record_id - 1];
}

std::string render_history(const std::vector<EmrRecord>& records) {
    if (records.empty()) {
        return kNoPriorRecords;
    }
    std::string out;
    int current = -1;
    for (const auto& r : records) {
        if (r.sim_time.encounter != current) {
            current = r.sim_time.encounter;
            if (!out.empty()) {
                out += '\n';
            }
            out += "## Encounter " + std::to_string(current) + "\n";
        }
        out += "### Record " + std::to_string(r.record_id) + " by " + display_name(r.author_role);
        if (!r.tags.empty()) {
            out += " [" + join(std::vector<std::string>(r.tags.begin(), r.tags.end()), ", ") + "]";
        }
        out += '\n';
        out += trim(r.body);
        out += '\n';
    }
    return out;
}

}  // namespace whai
