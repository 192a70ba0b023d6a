#include "whai/experiment.hpp"

#include "whai/belief.hpp"
#include "whai/error.hpp"
#include "whai/session.hpp"
#include "whai/session_store.hpp"
#include "whai/util.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace whai {

std::vector<Role> ExperimentPlan::slots(const std::vector<Role>& ordering) const {
    std::vector<Role> out{anchor};
    for (std::size_t i = 0; i < ordering.size(); ++i) {
        if (i > 0) {
            out.push_back(anchor);
        }
        const int size = i < block_sizes.size() ? block_sizes[i] : 3;
        for (int k = 0; k < size; ++k) {
            out.push_back(ordering[i]);
        }
    }
    for (int k = 0; k < closing_encounters; ++k) {
        out.push_back(anchor);
    }
    return out;
}

int ExperimentPlan::encounters_per_run() const { return static_cast<int>(slots(roles).size()); }

int ExperimentPlan::transition_slot(std::size_t block) const {
    int slot = 1;
    for (std::size_t i = 0; i <= block && i < roles.size(); ++i) {
        slot += i < block_sizes.size() ? block_sizes[i] : 3;
        slot += 1;
    }
    return slot;
}

std::string series_label(const std::vector<Role>& ordering) { return join(ordering, "-"); }

ExperimentPlan build_plan(const std::vector<Role>& roles, int replicates, std::shared_ptr<const Scenario> base,
                          const PlanOptions& options) {
    if (!base) {
        throw Error("experiment needs a base scenario");
    }
    if (roles.empty()) {
        throw Error("experiment needs at least one specialist role to permute");
    }
    if (replicates < 1) {
        throw Error("experiment needs at least one replicate");
    }
    std::set<Role> unique(roles.begin(), roles.end());
    if (unique.size() != roles.size()) {
        throw Error("experiment roles repeat a role");
    }
    auto has_template = [&base](const Role& r) {
        return std::any_of(base->encounters.begin(), base->encounters.end(),
                           [&r](const EncounterSpec& e) { return e.doctor_role == r; });
    };
    for (const auto& r : roles) {
        if (!base->has_agent(r)) {
            throw Error("role '" + r + "' has no persona");
        }
        if (!has_template(r)) {
            throw Error("role '" + r + "' has no encounter template in the base scenario");
        }
    }
    if (!base->has_agent(options.anchor) || !has_template(options.anchor)) {
        throw Error("anchor role '" + options.anchor + "' needs a persona and an encounter template");
    }
    for (int b : options.block_sizes) {
        if (b < 1) {
            throw Error("block sizes must be positive");
        }
    }

    ExperimentPlan plan;
    plan.experiment_id = options.experiment_id;
    plan.base = base;
    plan.roles = roles;
    plan.anchor = options.anchor;
    plan.block_sizes = options.block_sizes;
    plan.closing_encounters = options.closing_encounters;
    plan.replicates = replicates;
    plan.temperature = options.temperature.value_or(base->config.temperature);
    plan.focus_role = options.focus_role;

    const BeliefProbe* probe = nullptr;
    for (const auto& p : base->config.belief_probes) {
        if (options.probe_id.empty() || p.id == options.probe_id) {
            probe = &p;
            break;
        }
    }
    if (probe == nullptr) {
        throw Error(options.probe_id.empty() ? "base scenario defines no probe"
                                             : "base scenario has no probe '" + options.probe_id + "'");
    }
    plan.probe_id = probe->id;
    if (auto table = score_table_for(*probe)) {
        plan.score_table = *table;
    }

    // Permutations of the positions keep the caller's role order as the
    // lexicographic reference.
    std::vector<std::size_t> idx(roles.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    do {
        std::vector<Role> ordering;
        for (auto i : idx) {
            ordering.push_back(roles[i]);
        }
        plan.orderings.push_back(std::move(ordering));
    } while (std::next_permutation(idx.begin(), idx.end()));
    return plan;
}

Scenario scenario_for_run(const ExperimentPlan& plan, const std::vector<Role>& ordering) {
    Scenario s = *plan.base;
    std::map<Role, std::vector<EncounterSpec>> templates;
    for (const auto& e : plan.base->encounters) {
        templates[e.doctor_role].push_back(e);
    }
    std::map<Role, std::size_t> used;
    s.encounters.clear();
    int id = 1;
    for (const auto& role : plan.slots(ordering)) {
        const auto& list = templates.at(role);
        EncounterSpec e = list[used[role]++ % list.size()];
        e.encounter_id = id++;
        s.encounters.push_back(std::move(e));
    }
    s.config.temperature = plan.temperature;
    BeliefProbe probe;
    for (const auto& p : plan.base->config.belief_probes) {
        if (p.id == plan.probe_id) {
            probe = p;
        }
    }
    probe.schedule = ProbeSchedule::PostEncounter;
    probe.targets = {kTargetDoctor};
    s.config.belief_probes = {probe};
    return s;
}

std::vector<TrajectoryPoint> TrajectorySet::run(const std::string& run_id) const {
    std::vector<TrajectoryPoint> out;
    for (const auto& p : points) {
        if (p.run_id == run_id) {
            out.push_back(p);
        }
    }
    return out;
}

TrajectorySet execute_plan(const ExperimentPlan& plan, const Gateway& gateway, const ExecuteOptions& options) {
    struct Task {
        int series_index;
        int replicate;
        const std::vector<Role>* ordering;
        std::string run_id;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < plan.orderings.size(); ++s) {
        for (int r = 1; r <= plan.replicates; ++r) {
            tasks.push_back({static_cast<int>(s + 1), r, &plan.orderings[s],
                             "s" + std::to_string(s + 1) + "-r" + std::to_string(r)});
        }
    }
    struct Result {
        std::vector<TrajectoryPoint> points;
        std::optional<std::string> error;
    };
    std::vector<Result> results(tasks.size());
    const std::shared_ptr<const Gateway> shared_gateway(&gateway, [](const Gateway*) {});

    auto run_task = [&](std::size_t i) {
        const auto& task = tasks[i];
        try {
            auto scenario = std::make_shared<const Scenario>(scenario_for_run(plan, *task.ordering));
            EngineOptions eo;
            eo.call = options.call;
            eo.salt = static_cast<std::uint64_t>(task.replicate);
            eo.summaries_dir = options.summaries_dir;
            eo.annotations = {{"series", series_label(*task.ordering)},
                              {"replicate", std::to_string(task.replicate)},
                              {"run", task.run_id}};
            DebugSession session(scenario, shared_gateway, plan.experiment_id + "-" + task.run_id, eo);
            session.run_to_end();
            for (const auto& o : session.state().observations) {
                if (o.probe_id != plan.probe_id || o.phase != ProbePhase::Post) {
                    continue;
                }
                results[i].points.push_back({task.run_id, series_label(*task.ordering), task.series_index,
                                             task.replicate, o.position, o.agent_role, o.display_value(), o.score});
            }
        } catch (const std::exception& e) {
            results[i].points.clear();
            results[i].error = e.what();
        }
    };

    unsigned workers = options.concurrency == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                                : options.concurrency;
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, tasks.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            run_task(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < tasks.size(); i = next++) {
                    run_task(i);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    TrajectorySet set;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (results[i].error) {
            set.failures.push_back({tasks[i].run_id, *results[i].error});
            continue;
        }
        set.run_ids.push_back(tasks[i].run_id);
        set.points.insert(set.points.end(), results[i].points.begin(), results[i].points.end());
    }
    return set;
}

std::map<std::string, GroupSummary> aggregate(const std::vector<TrajectoryPoint>& points, GroupBy by) {
    std::map<std::string, std::vector<double>> groups;
    for (const auto& p : points) {
        if (!p.score) {
            continue;
        }
        std::string label;
        switch (by) {
        case GroupBy::Role: label = p.role; break;
        case GroupBy::Series: label = p.series; break;
        case GroupBy::EncounterSlot: label = std::to_string(p.encounter); break;
        }
        groups[label].push_back(*p.score);
    }
    if (groups.empty()) {
        throw Error("nothing to aggregate: no scored observations");
    }
    std::map<std::string, GroupSummary> out;
    for (const auto& [label, values] : groups) {
        out[label] = summarize(values);
    }
    return out;
}

namespace {

const std::vector<Role>* ordering_of(const ExperimentPlan& plan, const TrajectoryPoint& p) {
    if (p.series_index < 1 || static_cast<std::size_t>(p.series_index) > plan.orderings.size()) {
        return nullptr;
    }
    return &plan.orderings[static_cast<std::size_t>(p.series_index - 1)];
}

void finish(GroupedAnalysis& a) {
    std::vector<std::vector<double>> samples;
    for (const auto& [label, values] : a.groups) {
        samples.push_back(values);
    }
    try {
        a.anova = anova_oneway(samples);
    } catch (const Error& e) {
        a.anova_error = e.what();
    }
    for (auto i = a.groups.begin(); i != a.groups.end(); ++i) {
        for (auto j = std::next(i); j != a.groups.end(); ++j) {
            if (i->second.size() >= 2 && j->second.size() >= 2) {
                a.t_tests.push_back({i->first, j->first, t_test_unpaired(i->second, j->second)});
            }
        }
    }
}

}  // namespace

std::vector<GroupedAnalysis> standard_analyses(const ExperimentPlan& plan, const TrajectorySet& set) {
    std::vector<GroupedAnalysis> out;
    const int last = plan.encounters_per_run();

    GroupedAnalysis first_final{"first-vs-final", "anchor belief at the first and at the final encounter", {}, {}, {}, {}};
    GroupedAnalysis after_first{"after-first-block", "anchor belief after the first specialist block, by specialist",
                                {}, {}, {}, {}};
    GroupedAnalysis focus{"focus-included-vs-omitted",
                          "anchor belief after two specialist blocks, by whether " + plan.focus_role +
                              " was among them",
                          {}, {}, {}, {}};
    GroupedAnalysis preceding{"focus-by-preceding",
                              plan.focus_role + " belief at its first encounter, by the specialist seen before it", {},
                              {}, {}, {}};

    for (const auto& p : set.points) {
        if (!p.score) {
            continue;
        }
        const auto* ordering = ordering_of(plan, p);
        if (ordering == nullptr) {
            continue;
        }
        if (p.role == plan.anchor && p.encounter == 1) {
            first_final.groups["first"].push_back(*p.score);
        }
        if (p.role == plan.anchor && p.encounter == last) {
            first_final.groups["final"].push_back(*p.score);
        }
        if (p.role == plan.anchor && p.encounter == plan.transition_slot(0)) {
            after_first.groups[(*ordering)[0]].push_back(*p.score);
        }
        if (ordering->size() >= 2 && p.role == plan.anchor && p.encounter == plan.transition_slot(1)) {
            const bool included = (*ordering)[0] == plan.focus_role || (*ordering)[1] == plan.focus_role;
            focus.groups[included ? "included" : "omitted"].push_back(*p.score);
        }
        if (p.role == plan.focus_role) {
            const auto it = std::find(ordering->begin(), ordering->end(), plan.focus_role);
            const auto block = static_cast<std::size_t>(it - ordering->begin());
            const int first_slot = block == 0 ? 2 : plan.transition_slot(block - 1) + 1;
            if (p.encounter == first_slot) {
                preceding.groups[block == 0 ? "none" : (*ordering)[block - 1]].push_back(*p.score);
            }
        }
    }
    for (auto* a : {&first_final, &after_first, &focus, &preceding}) {
        finish(*a);
        out.push_back(std::move(*a));
    }
    return out;
}

std::string trajectories_csv(const TrajectorySet& set) {
    std::string out = "run_id,series,replicate,encounter,role,category,score\n";
    for (const auto& p : set.points) {
        out += csv_field(p.run_id) + "," + csv_field(p.series) + "," + std::to_string(p.replicate) + "," +
               std::to_string(p.encounter) + "," + csv_field(p.role) + "," + csv_field(p.category) + "," +
               (p.score ? format_fixed(*p.score, 4) : std::string()) + "\n";
    }
    return out;
}

namespace {

json summary_json(const GroupSummary& s) {
    return json{{"mean", s.mean}, {"sd", s.sd ? json(*s.sd) : json(nullptr)}, {"n", s.n}};
}

json number_or_string(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    return v;
}

}  // namespace

json stats_json(const ExperimentPlan& plan, const TrajectorySet& set, const std::vector<GroupedAnalysis>& analyses) {
    json orderings = json::array();
    for (const auto& o : plan.orderings) {
        orderings.push_back(series_label(o));
    }
    json failures = json::array();
    for (const auto& f : set.failures) {
        failures.push_back({{"run_id", f.run_id}, {"error", f.error}});
    }
    json aggregates = json::object();
    if (!set.points.empty()) {
        for (auto [name, by] : {std::pair{"by_role", GroupBy::Role}, std::pair{"by_series", GroupBy::Series},
                                std::pair{"by_encounter", GroupBy::EncounterSlot}}) {
            json groups = json::object();
            try {
                for (const auto& [label, s] : aggregate(set.points, by)) {
                    groups[label] = summary_json(s);
                }
            } catch (const Error&) {
            }
            aggregates[name] = groups;
        }
    }
    json list = json::array();
    for (const auto& a : analyses) {
        json groups = json::object();
        for (const auto& [label, values] : a.groups) {
            auto s = summary_json(summarize(values));
            s["values"] = values;
            groups[label] = s;
        }
        json t_tests = json::array();
        for (const auto& t : a.t_tests) {
            t_tests.push_back({{"a", t.a}, {"b", t.b}, {"t", number_or_string(t.t.t)}, {"p", t.t.p}, {"df", t.t.df}});
        }
        json entry{{"name", a.name}, {"description", a.description}, {"groups", groups}, {"t_tests", t_tests}};
        if (a.anova) {
            entry["anova"] = {{"f", number_or_string(a.anova->f)},
                              {"p", a.anova->p},
                              {"df_between", a.anova->df_between},
                              {"df_within", a.anova->df_within}};
        } else {
            entry["anova"] = nullptr;
            entry["anova_error"] = a.anova_error;
        }
        list.push_back(entry);
    }
    return json{{"experiment_id", plan.experiment_id},
                {"roles", plan.roles},
                {"anchor", plan.anchor},
                {"orderings", orderings},
                {"replicates", plan.replicates},
                {"encounters_per_run", plan.encounters_per_run()},
                {"probe_id", plan.probe_id},
                {"runs", set.runs()},
                {"observations", set.points.size()},
                {"failures", failures},
                {"aggregates", aggregates},
                {"analyses", list}};
}

fs::path write_experiment(const fs::path& root, const ExperimentPlan& plan, const TrajectorySet& set,
                          const std::vector<GroupedAnalysis>& analyses) {
    const auto dir = root / "experiments" / plan.experiment_id;
    write_text_file_atomic(dir / "observations.csv", trajectories_csv(set));
    write_text_file_atomic(dir / "stats.json", stats_json(plan, set, analyses).dump(2) + "\n");
    return dir;
}

}  // namespace whai
