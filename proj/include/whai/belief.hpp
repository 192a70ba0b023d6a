#pragma once

#include "whai/scenario.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace whai {

enum class ProbePhase { Pre, Post, OnDemand };

std::string to_string(ProbePhase phase);
ProbePhase parse_phase(const std::string& s);

struct BeliefObservation {
    Role agent_role;
    /// Scenario encounter id and execution position the observation belongs to.
    int encounter_id = 0;
    int position = 0;
    ProbePhase phase = ProbePhase::Post;
    std::string probe_id;
    std::string raw_response;

    ResponseKind kind = ResponseKind::Categorical;
    std::optional<std::string> category;
    std::optional<double> number;
    std::vector<std::string> ranked;
    bool parse_failed = false;
    std::optional<double> score;

    /// Category, number, or head of the ranked list; empty on parse failure.
    std::string display_value() const;
};

/// rejects 0, skeptical 3, neutral 5, believes 8.
const std::map<std::string, double>& default_stance_scores();

/// Throws Error unless `scores` covers every category and strictly increases along the order.
void validate_score_table(const std::vector<std::string>& categories, const std::map<std::string, double>& scores);

/// The probe's own table, else the default table when the categories fall inside
/// it, else nothing.
std::optional<std::map<std::string, double>> score_table_for(const BeliefProbe& probe);

/// Throws Error on a category outside the table.
double map_stance_to_score(const std::string& category, const std::map<std::string, double>& table);

/// Splits "1. A 2. B", "A; B", "A, B" or one-per-line text into items.
std::vector<std::string> split_ranked_list(std::string_view text);

/// Applies a compiled probe to a raw response. Never throws on unparseable text;
/// sets parse_failed instead.
BeliefObservation parse_belief(const BeliefProbe& probe, const std::string& raw_response);

}  // namespace whai
