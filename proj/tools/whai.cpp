#include "whai/error.hpp"
#include "whai/event_log.hpp"
#include "whai/experiment.hpp"
#include "whai/runtime.hpp"
#include "whai/service.hpp"
#include "whai/session.hpp"
#include "whai/session_store.hpp"
#include "whai/util.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::string scenario;
    std::optional<int> scenario_id;
    std::string session_dir = "runs";
    std::string cache_dir;
    std::string provider = "scripted";
    std::string script;
    bool nocache = false;

    fs::path cache() const { return cache_dir.empty() ? fs::path(session_dir) / "cache" : fs::path(cache_dir); }
};

void add_common(CLI::App& app, Common& c, bool needs_scenario) {
    auto* s = app.add_option("--scenario", c.scenario, "Scenario config.yaml");
    if (needs_scenario) {
        s->required();
    }
    app.add_option("--scenario-id", c.scenario_id, "Scenario id within the config (default: the file's default)");
    app.add_option("--session-dir", c.session_dir, "Store root for sessions, EMR logs, experiments and the cache")
        ->capture_default_str();
    app.add_option("--cache-dir", c.cache_dir, "Response cache directory (default: <session-dir>/cache)");
    app.add_option("--provider", c.provider, "Completion provider")
        ->check(CLI::IsMember({"scripted", "live"}))
        ->capture_default_str();
    app.add_option("--script", c.script, "Scripted rule file (default: the scenario's)");
    app.add_flag("--nocache", c.nocache, "Bypass the response cache; every call reaches the provider");
}

int position_of(const whai::DebugSession& s, int encounter_id) {
    const auto& order = s.state().order;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] == encounter_id) {
            return static_cast<int>(i) + 1;
        }
    }
    throw whai::SessionError(whai::SessionError::Code::InvalidTarget,
                             "encounter " + std::to_string(encounter_id) + " is not in the scenario");
}

void print_outcomes(const std::vector<whai::EncounterOutcome>& outcomes) {
    for (const auto& o : outcomes) {
        std::cout << "encounter " << o.encounter_id << " (position " << o.position << ", "
                  << whai::to_string(o.transcript.terminal) << ")\n";
    }
}

void print_observations(const whai::DebugSession& s, int position) {
    for (const auto& o : s.state().observations) {
        if (o.position == position) {
            std::cout << "  " << o.agent_role << " " << o.probe_id << " [" << whai::to_string(o.phase)
                      << "]: " << o.display_value() << "\n";
        }
    }
}

/// Reads commands at each pause: continue, step, probe <agent> <probe>, quit.
bool interact(whai::DebugSession& s) {
    std::string line;
    for (;;) {
        std::cout << "(whai " << s.cursor() << "/" << s.state().total() << ") " << std::flush;
        if (!std::getline(std::cin, line)) {
            return false;
        }
        const auto words = whai::split(whai::trim(line), ' ');
        if (words.empty() || words[0].empty() || words[0] == "c" || words[0] == "continue") {
            return true;
        }
        if (words[0] == "q" || words[0] == "quit") {
            return false;
        }
        try {
            if (words[0] == "s" || words[0] == "step") {
                const auto o = s.step();
                print_outcomes({o});
                print_observations(s, o.position);
            } else if ((words[0] == "p" || words[0] == "probe") && words.size() == 3) {
                const auto o = s.probe(words[1], words[2]);
                std::cout << "  " << o.agent_role << " " << o.probe_id << ": " << o.display_value() << "\n";
            } else {
                std::cout << "commands: continue | step | probe <agent> <probe-id> | quit\n";
            }
        } catch (const whai::Error& e) {
            std::cout << "error: " << e.what() << "\n";
        }
    }
}

int cmd_run(const Common& c, const std::string& session_id, const std::vector<int>& breakpoint_ids,
            std::optional<int> until, bool interactive, std::uint64_t salt) {
    whai::Runtime runtime(c.cache());
    whai::SessionMeta meta;
    meta.scenario_config = fs::absolute(c.scenario);
    const auto scenario = runtime.scenario(meta.scenario_config, c.scenario_id);
    meta.scenario_id = scenario->config.scenario_id;
    meta.session_id = session_id.empty() ? "scenario-" + std::to_string(meta.scenario_id) : session_id;
    meta.salt = salt;
    meta.use_cache = !c.nocache;
    meta.provider = c.provider;
    meta.script = c.script.empty() ? fs::path() : fs::absolute(c.script);
    auto gateway = runtime.gateway(*scenario, meta.provider, meta.script);
    whai::DebugSession session(scenario, gateway, meta.session_id, runtime.engine_options(meta, *scenario));

    std::set<int> breakpoints;
    for (int id : breakpoint_ids) {
        breakpoints.insert(position_of(session, id));
    }
    if (!breakpoints.empty()) {
        session.set_breakpoints(breakpoints);
    }
    const int target = until ? position_of(session, *until) + 1 : session.state().total() + 1;

    const whai::SessionStore store(c.session_dir);
    auto pause = [&] {
        std::cout << "paused at position " << session.cursor() << "\n";
        print_observations(session, session.cursor() - 1);
        store.save(session, meta);
        return !interactive || interact(session);
    };
    bool go = !session.breakpoints().contains(session.cursor()) || pause();
    while (go && session.cursor() < target) {
        print_outcomes(session.run_until(target));
        if (session.cursor() >= target || !session.breakpoints().contains(session.cursor())) {
            break;
        }
        go = pause();
    }
    store.save(session, meta);
    const auto totals = session.ledger().totals();
    std::cout << "session " << session.id() << ": " << session.cursor() - 1 << "/" << session.state().total()
              << " encounters, " << session.event_count() << " events, " << session.ledger().calls()
              << " provider calls, " << totals.prompt_tokens + totals.completion_tokens << " tokens, $"
              << whai::format_fixed(session.ledger().total_cost(), 6) << "\n"
              << "written to " << store.session_dir(session.id()).string() << "\n";
    return 0;
}

int cmd_replay(const Common& c, const std::string& session_id, const std::string& controls_path,
               const std::string& replay_id) {
    whai::Runtime runtime(c.cache());
    const whai::SessionStore store(c.session_dir);
    auto source = runtime.restore(store, session_id);
    auto meta = store.load_meta(session_id);
    meta.session_id = replay_id.empty() ? session_id + "-replay" : replay_id;
    if (controls_path.empty()) {
        auto r = whai::replay_exact(*source, meta.session_id);
        meta.parent.reset();
        meta.prefix_events = 0;
        store.save(*r.session, meta);
        std::cout << (r.identical ? "identical" : "diverged at event " + std::to_string(r.first_divergence)) << " ("
                  << r.session->event_count() << " events)\n";
        return r.identical ? 0 : 3;
    }
    const auto controls = whai::controls_from_json(json::parse(whai::read_text_file(controls_path)));
    auto child = whai::replay_with(*source, controls, meta.session_id);
    meta.parent = whai::ParentRef{session_id, 1};
    meta.prefix_events = 0;
    store.save(*child, meta);
    std::cout << "replayed with controls; first divergence at event "
              << whai::first_divergence(source->events(), child->events()) << "\n";
    for (const auto& row : whai::diff_beliefs(*source, *child)) {
        if (!row.same_value()) {
            std::cout << "  " << row.agent << " encounter " << row.encounter_id << " " << row.probe_id << ": "
                      << (row.a ? row.a->display_value() : "-") << " -> " << (row.b ? row.b->display_value() : "-")
                      << "\n";
        }
    }
    return 0;
}

int cmd_experiment(const Common& c, const whai::PlanOptions& po, std::vector<std::string> roles, int replicates,
                   unsigned concurrency) {
    whai::Runtime runtime(c.cache());
    const auto base = runtime.scenario(fs::absolute(c.scenario), c.scenario_id);
    if (roles.empty()) {
        for (const auto& r : base->specialist_roles()) {
            if (r != po.anchor) {
                roles.push_back(r);
            }
        }
    }
    const auto plan = whai::build_plan(roles, replicates, base, po);
    auto gateway = runtime.gateway(*base, c.provider, c.script.empty() ? fs::path() : fs::absolute(c.script));
    whai::ExecuteOptions eo;
    eo.call.use_cache = !c.nocache;
    eo.concurrency = concurrency;
    eo.summaries_dir = base->config.summaries_dir;
    const auto set = whai::execute_plan(plan, *gateway, eo);
    const auto analyses = whai::standard_analyses(plan, set);
    const auto dir = whai::write_experiment(c.session_dir, plan, set, analyses);
    std::cout << set.runs() << "/" << plan.total_runs() << " runs, " << set.points.size() << " observations, "
              << set.failures.size() << " failures\n";
    for (const auto& f : set.failures) {
        std::cout << "  failed " << f.run_id << ": " << f.error << "\n";
    }
    for (const auto& a : analyses) {
        std::cout << a.name << ":";
        for (const auto& [label, values] : a.groups) {
            const auto s = whai::summarize(values);
            std::cout << " " << label << "=" << whai::format_fixed(s.mean, 3) << " (n=" << s.n << ")";
        }
        if (a.anova) {
            std::cout << "  F=" << whai::format_fixed(a.anova->f, 4) << " p=" << whai::format_fixed(a.anova->p, 6);
        } else {
            std::cout << "  (" << a.anova_error << ")";
        }
        std::cout << "\n";
    }
    std::cout << "written to " << dir.string() << "\n";
    return set.failures.empty() ? 0 : 4;
}

whai::Service* g_service = nullptr;

int cmd_serve(const Common& c, const std::string& host, int port) {
    whai::ServiceOptions so;
    so.root = c.session_dir;
    so.cache_dir = c.cache();
    if (!c.scenario.empty()) {
        so.default_scenario = fs::absolute(c.scenario);
    }
    so.default_scenario_id = c.scenario_id;
    so.provider = c.provider;
    so.script = c.script.empty() ? fs::path() : fs::absolute(c.script);
    whai::Service service(so);
    const int bound = service.bind(host, port);
    if (bound < 0) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
    }
    g_service = &service;
    std::signal(SIGINT, [](int) {
        if (g_service != nullptr) {
            g_service->stop();
        }
    });
    std::signal(SIGTERM, [](int) {
        if (g_service != nullptr) {
            g_service->stop();
        }
    });
    std::cout << "listening on http://" << host << ":" << bound << "/api/v1" << std::endl;
    service.run();
    g_service = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent clinical encounter simulator and belief debugger"};
    app.require_subcommand(1);

    Common run_c;
    std::string run_id;
    std::vector<int> breakpoints;
    std::optional<int> until;
    bool interactive = false;
    std::uint64_t salt = 0;
    auto* run = app.add_subcommand("run", "Run a scenario and write its session artifacts");
    add_common(*run, run_c, true);
    run->add_option("--session-id", run_id, "Session id (default: scenario-<id>)");
    run->add_option("--breakpoints", breakpoints, "Encounter ids to pause before")->delimiter(',');
    run->add_option("--until", until, "Stop after this encounter id");
    run->add_flag("--interactive", interactive, "Prompt for commands at each breakpoint");
    run->add_option("--salt", salt, "Replicate salt mixed into every cache key");

    Common replay_c;
    std::string replay_source;
    std::string replay_controls;
    std::string replay_id;
    auto* replay = app.add_subcommand("replay", "Re-execute a stored session and compare event logs");
    add_common(*replay, replay_c, false);
    replay->add_option("--session-id", replay_source, "Stored session to replay")->required();
    replay->add_option("--controls", replay_controls, "ControlSet JSON to apply from the first encounter");
    replay->add_option("--replay-id", replay_id, "Id for the replayed session");

    Common exp_c;
    whai::PlanOptions po;
    std::vector<std::string> roles;
    int replicates = 3;
    unsigned concurrency = 1;
    auto* experiment = app.add_subcommand("experiment", "Run every specialist ordering with replicates");
    add_common(*experiment, exp_c, true);
    experiment->add_option("--experiment-id", po.experiment_id)->capture_default_str();
    experiment->add_option("--roles", roles, "Specialist roles to permute (default: all but the anchor)")
        ->delimiter(',');
    experiment->add_option("--replicates", replicates)->capture_default_str()->check(CLI::PositiveNumber);
    experiment->add_option("--anchor", po.anchor)->capture_default_str();
    experiment->add_option("--focus-role", po.focus_role)->capture_default_str();
    experiment->add_option("--probe", po.probe_id, "Probe id (default: the scenario's first)");
    experiment->add_option("--concurrency", concurrency, "Worker threads; 0 uses every core")->capture_default_str();

    Common serve_c;
    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Serve the debugger API under /api/v1");
    add_common(*serve, serve_c, false);
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            return cmd_run(run_c, run_id, breakpoints, until, interactive, salt);
        }
        if (*replay) {
            return cmd_replay(replay_c, replay_source, replay_controls, replay_id);
        }
        if (*experiment) {
            return cmd_experiment(exp_c, po, roles, replicates, concurrency);
        }
        if (*serve) {
            return cmd_serve(serve_c, host, port);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
