#pragma once

#include "whai/gateway.hpp"
#include "whai/scenario.hpp"
#include "whai/stats.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace whai {

struct PlanOptions {
    std::string experiment_id = "order-effects";
    /// Fixed role seen at the opening, at every transition, and at the close.
    Role anchor = "pediatrician";
    /// Encounters per specialist block, by block position. Missing entries use 3.
    std::vector<int> block_sizes = {4, 3, 3};
    int closing_encounters = 3;
    /// Probe applied to every encounter's specialist; empty uses the base's first probe.
    std::string probe_id;
    /// Role whose presence or absence splits the transition analysis.
    Role focus_role = "rheumatologist";
    std::optional<double> temperature;
};

struct ExperimentPlan {
    std::string experiment_id;
    std::shared_ptr<const Scenario> base;
    std::vector<Role> roles;
    Role anchor;
    std::vector<int> block_sizes;
    int closing_encounters = 3;
    int replicates = 1;
    double temperature = 0.0;
    std::string probe_id;
    std::map<std::string, double> score_table;
    Role focus_role;
    /// All n! orderings of `roles`, lexicographic by the given role order.
    std::vector<std::vector<Role>> orderings;

    std::size_t total_runs() const { return orderings.size() * static_cast<std::size_t>(replicates); }
    /// Role for each 1-based slot of one run.
    std::vector<Role> slots(const std::vector<Role>& ordering) const;
    int encounters_per_run() const;
    /// Slot of the anchor encounter that follows block `block` (0-based).
    int transition_slot(std::size_t block) const;
};

/// Throws Error for an empty role list, a role without persona, or replicates < 1.
ExperimentPlan build_plan(const std::vector<Role>& roles, int replicates, std::shared_ptr<const Scenario> base,
                          const PlanOptions& options = {});

std::string series_label(const std::vector<Role>& ordering);

/// One run's scenario: encounters cloned from the base's per-role templates,
/// cycled in id order, renumbered 1..N, each probing its specialist.
Scenario scenario_for_run(const ExperimentPlan& plan, const std::vector<Role>& ordering);

struct TrajectoryPoint {
    std::string run_id;
    std::string series;
    int series_index = 0;
    int replicate = 0;
    int encounter = 0;
    Role role;
    std::string category;
    std::optional<double> score;
};

struct RunFailure {
    std::string run_id;
    std::string error;
};

struct TrajectorySet {
    std::vector<TrajectoryPoint> points;
    std::vector<std::string> run_ids;
    std::vector<RunFailure> failures;
    std::size_t runs() const { return run_ids.size(); }
    /// Scores of one run, by encounter.
    std::vector<TrajectoryPoint> run(const std::string& run_id) const;
};

struct ExecuteOptions {
    CallOptions call;
    /// Worker threads; 0 picks the hardware concurrency.
    unsigned concurrency = 1;
    std::filesystem::path summaries_dir;
};

TrajectorySet execute_plan(const ExperimentPlan& plan, const Gateway& gateway, const ExecuteOptions& options = {});

enum class GroupBy { Role, Series, EncounterSlot };

/// Mean, sd and n of scored points per group label. Throws Error on an empty set.
std::map<std::string, GroupSummary> aggregate(const std::vector<TrajectoryPoint>& points, GroupBy by);

struct GroupedAnalysis {
    std::string name;
    std::string description;
    std::map<std::string, std::vector<double>> groups;
    std::optional<AnovaResult> anova;
    std::string anova_error;
    struct Pair {
        std::string a;
        std::string b;
        TTestResult t;
    };
    std::vector<Pair> t_tests;
};

/// The standard order-effect comparisons:
///  first-vs-final: anchor at the first and the last encounter;
///  after-first-block: anchor at the first transition, by first specialist;
///  focus-included-vs-omitted: anchor at the second transition, by whether
///    the focus role was among the first two specialists;
///  focus-by-preceding: focus role at its first encounter, by the specialist before it.
std::vector<GroupedAnalysis> standard_analyses(const ExperimentPlan& plan, const TrajectorySet& set);

std::string trajectories_csv(const TrajectorySet& set);
nlohmann::json stats_json(const ExperimentPlan& plan, const TrajectorySet& set,
                          const std::vector<GroupedAnalysis>& analyses);

/// Writes experiments/<id>/observations.csv and stats.json under `root`.
std::filesystem::path write_experiment(const std::filesystem::path& root, const ExperimentPlan& plan,
                                       const TrajectorySet& set, const std::vector<GroupedAnalysis>& analyses);

}  // namespace whai
