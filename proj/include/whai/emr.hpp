#pragma once

#include "whai/scenario.hpp"

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace whai {

/// Encounter-indexed logical time: (execution position, intra-encounter step).
struct LogicalTime {
    int encounter = 0;
    int step = 0;
    auto operator<=>(const LogicalTime&) const = default;
};

inline constexpr int kLastStep = std::numeric_limits<int>::max();

inline constexpr const char* kTagLabRelease = "lab-release";
inline constexpr const char* kTagCounterfactual = "counterfactual-injected";
inline constexpr const char* kTagInVisit = "in-visit";

struct EmrSections {
    std::string subjective;
    std::string findings;
    std::string labs;
    std::string assessment;
    std::string plan;
    bool operator==(const EmrSections&) const = default;
};

/// Splits a note on its labeled headers (case-insensitive, markdown emphasis
/// and trailing colon allowed). Text before any header lands in assessment.
EmrSections parse_sections(std::string_view body);
std::string format_sections(const EmrSections& sections);

struct EmrRecord {
    std::uint64_t record_id = 0;
    /// Scenario encounter id the record belongs to.
    int encounter_id = 0;
    Role author_role;
    LogicalTime sim_time;
    std::string body;
    std::set<std::string> tags;
    /// Display only.
    std::string display_time;

    EmrSections sections() const { return parse_sections(body); }
    bool has_tag(const std::string& tag) const { return tags.contains(tag); }
};

struct VisibilityOverlay {
    std::set<std::uint64_t> hidden_record_ids;
    std::map<Role, std::set<std::uint64_t>> hidden_for_role;
    std::string scope = "session";

    bool hides(const Role& viewer, std::uint64_t record_id) const;
    bool empty() const { return hidden_record_ids.empty() && hidden_for_role.empty(); }
    bool operator==(const VisibilityOverlay&) const = default;
};

/// Records visible to `viewer` at `at`, in record_id order.
std::vector<EmrRecord> visible_records(const std::vector<EmrRecord>& records, const Role& viewer, LogicalTime at,
                                       const RecordsPolicy& policy, const VisibilityOverlay& overlay);

/// Append-only record list.
class EmrStore {
public:
    /// Assigns the next record_id and returns it.
    std::uint64_t append(EmrRecord record);
    const std::vector<EmrRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    const EmrRecord& get(std::uint64_t record_id) const;

    std::vector<EmrRecord> visible(const Role& viewer, LogicalTime at, const RecordsPolicy& policy,
                                   const VisibilityOverlay& overlay) const {
        return visible_records(records_, viewer, at, policy, overlay);
    }

private:
    std::vector<EmrRecord> records_;
};

inline constexpr const char* kNoPriorRecords = "No prior records.";

/// Byte-stable prompt rendering grouped by encounter.
std::string render_history(const std::vector<EmrRecord>& records);

}  // namespace whai
