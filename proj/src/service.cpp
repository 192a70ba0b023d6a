#include "whai/service.hpp"

#include "whai/error.hpp"
#include "whai/event_log.hpp"
#include "whai/experiment.hpp"
#include "whai/runtime.hpp"
#include "whai/session_store.hpp"
#include "whai/util.hpp"

#include "httplib.h"

#include <atomic>
#include <regex>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace whai {

int http_status_for(const std::exception& e) {
    if (const auto* s = dynamic_cast<const SessionError*>(&e)) {
        switch (s->code()) {
        case SessionError::Code::NotFound: return 404;
        case SessionError::Code::Busy:
        case SessionError::Code::EndOfScenario: return 409;
        case SessionError::Code::InvalidControl:
        case SessionError::Code::InvalidTarget:
        case SessionError::Code::InvalidForkPoint:
        case SessionError::Code::ProbeMismatch:
        case SessionError::Code::UnknownAgent: return 422;
        }
    }
    if (dynamic_cast<const json::exception*>(&e) != nullptr) {
        return 400;
    }
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) {
        return 422;
    }
    if (dynamic_cast<const CacheMissError*>(&e) != nullptr) {
        return 409;
    }
    if (dynamic_cast<const ProviderError*>(&e) != nullptr || dynamic_cast<const ScriptMissError*>(&e) != nullptr) {
        return 502;
    }
    return 500;
}

namespace {

const std::regex kIdPattern("^[A-Za-z0-9][A-Za-z0-9._-]{0,95}$");

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

json parse_body(const httplib::Request& req) {
    if (trim(req.body).empty()) {
        return json::object();
    }
    auto j = json::parse(req.body);
    if (!j.is_object()) {
        throw SessionError(SessionError::Code::InvalidControl, "request body must be a JSON object");
    }
    return j;
}

void require_id(const std::string& id) {
    if (!std::regex_match(id, kIdPattern)) {
        throw SessionError(SessionError::Code::InvalidControl, "invalid id '" + id + "'");
    }
}

enum class ExperimentStatus { Running, Completed, Failed };

std::string to_string(ExperimentStatus s) {
    switch (s) {
    case ExperimentStatus::Running: return "running";
    case ExperimentStatus::Completed: return "completed";
    case ExperimentStatus::Failed: return "failed";
    }
    return "failed";
}

struct ExperimentEntry {
    std::string id;
    ExperimentStatus status = ExperimentStatus::Running;
    std::string error;
    std::size_t planned_runs = 0;
    TrajectorySet set;
    json stats;
    std::string csv;
};

}  // namespace

struct Service::Impl {
    struct Entry {
        std::shared_ptr<DebugSession> session;
        SessionMeta meta;
    };

    ServiceOptions options;
    Runtime runtime;
    SessionStore store;
    httplib::Server server;
    std::atomic<bool> stopping{false};

    std::mutex mutex;
    std::map<std::string, Entry> sessions;
    std::map<std::string, std::shared_ptr<ExperimentEntry>> experiments;
    std::vector<std::thread> workers;
    std::uint64_t counter = 0;

    explicit Impl(ServiceOptions o)
        : options(std::move(o)),
          runtime(options.cache_dir.empty() ? options.root / "cache" : options.cache_dir),
          store(options.root) {
        routes();
    }

    ~Impl() {
        stopping = true;
        server.stop();
        for (auto& t : workers) {
            if (t.joinable()) {
                t.join();
            }
        }
    }

    std::string fresh_id(const std::string& prefix) {
        std::lock_guard lock(mutex);
        for (;;) {
            auto id = prefix + std::to_string(++counter);
            if (!sessions.contains(id) && !store.exists(id) && !experiments.contains(id)) {
                return id;
            }
        }
    }

    std::optional<Entry> lookup(const std::string& id) {
        {
            std::lock_guard lock(mutex);
            if (auto it = sessions.find(id); it != sessions.end()) {
                return it->second;
            }
        }
        if (!std::regex_match(id, kIdPattern) || !store.exists(id)) {
            return std::nullopt;
        }
        Entry e{std::shared_ptr<DebugSession>(runtime.restore(store, id)), store.load_meta(id)};
        std::lock_guard lock(mutex);
        return sessions.try_emplace(id, std::move(e)).first->second;
    }

    Entry require(const std::string& id) {
        auto e = lookup(id);
        if (!e) {
            throw SessionError(SessionError::Code::NotFound, "unknown session '" + id + "'");
        }
        return *e;
    }

    void add(Entry e) {
        store.save(*e.session, e.meta);
        std::lock_guard lock(mutex);
        sessions[e.meta.session_id] = std::move(e);
    }

    static std::unique_lock<std::mutex> claim(const DebugSession& s) {
        std::unique_lock lock(s.command_mutex(), std::try_to_lock);
        if (!lock.owns_lock()) {
            throw SessionError(SessionError::Code::Busy, "session '" + s.id() + "' is running another command");
        }
        return lock;
    }

    static json summary(const Entry& e) {
        const auto& s = *e.session;
        const auto& st = s.state();
        json j{{"session_id", s.id()},
               {"scenario_id", s.scenario().config.scenario_id},
               {"cursor", st.cursor},
               {"total", st.total()},
               {"finished", st.finished()},
               {"order", st.order},
               {"breakpoints", s.breakpoints()},
               {"event_count", s.event_count()},
               {"salt", e.meta.salt},
               {"use_cache", e.meta.use_cache},
               {"provider", e.meta.provider}};
        j["next_encounter_id"] = st.finished() ? json(nullptr) : json(st.order[static_cast<std::size_t>(st.cursor - 1)]);
        if (s.parent()) {
            j["parent"] = {{"session_id", s.parent()->session_id}, {"fork_at", s.parent()->fork_at}};
        } else {
            j["parent"] = nullptr;
        }
        const auto t = s.ledger().totals();
        j["ledger"] = {{"calls", s.ledger().records().size()},
                       {"prompt_tokens", t.prompt_tokens},
                       {"completion_tokens", t.completion_tokens},
                       {"cost_usd", s.ledger().total_cost()}};
        return j;
    }

    std::size_t prefix_count(const DebugSession& parent, int at) {
        std::size_t n = 0;
        for (const auto& ev : parent.events()) {
            if (ev.encounter < at) {
                ++n;
            }
        }
        return n;
    }

    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    Handler guarded(Handler h) {
        return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            try {
                h(req, res);
            } catch (const std::exception& e) {
                reply(res, http_status_for(e), json{{"error", e.what()}, {"status", http_status_for(e)}});
            }
        };
    }

    void routes() {
        const std::string s = "/api/v1/sessions/([^/]+)";

        server.Get("/api/v1/health", guarded([](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); }));

        server.Get("/api/v1/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
            std::set<std::string> ids;
            for (const auto& id : store.list()) {
                ids.insert(id);
            }
            {
                std::lock_guard lock(mutex);
                for (const auto& [id, e] : sessions) {
                    ids.insert(id);
                }
            }
            reply(res, 200, {{"sessions", ids}});
        }));

        server.Post("/api/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) { create(req, res); }));

        server.Get(s, guarded([this](const httplib::Request& req, httplib::Response& res) { reply(res, 200, summary(require(req.matches[1]))); }));

        server.Get(s + "/scenario", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto e = require(req.matches[1]);
            const auto& sc = e.session->scenario();
            json encounters = json::array();
            for (const auto& enc : sc.encounters) {
                encounters.push_back({{"encounter_id", enc.encounter_id},
                                      {"doctor_role", enc.doctor_role},
                                      {"reason_for_visit", enc.reason_for_visit},
                                      {"doctor_preread", enc.doctor_preread}});
            }
            json probes = json::array();
            for (const auto& p : e.session->state().probes) {
                probes.push_back(probe_json(p));
            }
            json agents = json::array();
            for (const auto& [role, a] : e.session->state().agents) {
                agents.push_back(role);
            }
            reply(res, 200,
                  {{"scenario_id", sc.config.scenario_id},
                   {"moderator_role", sc.config.moderator_role},
                   {"agents", agents},
                   {"encounters", encounters},
                   {"probes", probes}});
        }));

        server.Post(s + "/step", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            auto lock = claim(*e.session);
            const auto outcome = e.session->step();
            store.save(*e.session, e.meta);
            reply(res, 200,
                  {{"session", summary(e)},
                   {"stepped", json::array({{{"position", outcome.position},
                                             {"encounter_id", outcome.encounter_id},
                                             {"terminal", to_string(outcome.transcript.terminal)}}})}});
        }));

        server.Post(s + "/run-until", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            const auto body = parse_body(req);
            std::optional<int> target;
            if (body.contains("target") && !body["target"].is_null()) {
                target = body["target"].get<int>();
            }
            auto lock = claim(*e.session);
            const auto outcomes = body.value("to_end", false) ? e.session->run_to_end() : e.session->run_until(target);
            store.save(*e.session, e.meta);
            json stepped = json::array();
            for (const auto& o : outcomes) {
                stepped.push_back({{"position", o.position},
                                   {"encounter_id", o.encounter_id},
                                   {"terminal", to_string(o.transcript.terminal)}});
            }
            reply(res, 200, {{"session", summary(e)}, {"stepped", stepped}});
        }));

        server.Post(s + "/breakpoints", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            const auto body = parse_body(req);
            if (!body.contains("breakpoints") || !body["breakpoints"].is_array()) {
                throw SessionError(SessionError::Code::InvalidTarget, "breakpoints must be an array of positions");
            }
            auto lock = claim(*e.session);
            e.session->set_breakpoints(body["breakpoints"].get<std::set<int>>());
            store.save(*e.session, e.meta);
            reply(res, 200, summary(e));
        }));

        server.Post(s + "/controls", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            const auto body = parse_body(req);
            const auto controls = controls_from_json(body.contains("controls") ? body["controls"] : body);
            auto lock = claim(*e.session);
            e.session->apply_controls(controls);
            store.save(*e.session, e.meta);
            reply(res, 200, summary(e));
        }));

        server.Post(s + "/probe", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            const auto body = parse_body(req);
            if (!body.contains("agent") || !body["agent"].is_string()) {
                throw SessionError(SessionError::Code::UnknownAgent, "probe needs an agent");
            }
            if (!body.contains("probe")) {
                throw SessionError(SessionError::Code::InvalidControl, "probe needs a probe id or definition");
            }
            const auto agent = body["agent"].get<std::string>();
            auto lock = claim(*e.session);
            const auto obs = body["probe"].is_string()
                                 ? e.session->probe(agent, body["probe"].get<std::string>())
                                 : e.session->probe(agent, probe_from_json(body["probe"]));
            store.save(*e.session, e.meta);
            reply(res, 200, observation_json(obs));
        }));

        server.Post(s + "/fork", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto parent = require(req.matches[1]);
            const auto body = parse_body(req);
            const int at = body.value("at", parent.session->cursor());
            const auto controls =
                body.contains("controls") ? controls_from_json(body["controls"]) : ControlSet{};
            const auto id = body.contains("session_id") ? body["session_id"].get<std::string>()
                                                        : fresh_id(parent.meta.session_id + "-fork");
            require_id(id);
            if (lookup(id)) {
                throw SessionError(SessionError::Code::Busy, "session '" + id + "' already exists");
            }
            auto lock = claim(*parent.session);
            Entry child{std::shared_ptr<DebugSession>(parent.session->fork(at, controls, id)), parent.meta};
            child.meta.session_id = id;
            child.meta.parent = ParentRef{parent.meta.session_id, at};
            child.meta.prefix_events = prefix_count(*parent.session, at);
            lock.unlock();
            add(child);
            reply(res, 201, summary(child));
        }));

        server.Post(s + "/replay", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto source = require(req.matches[1]);
            const auto body = parse_body(req);
            const auto mode = body.value("mode", std::string("exact"));
            const auto id = body.contains("session_id") ? body["session_id"].get<std::string>()
                                                        : fresh_id(source.meta.session_id + "-replay");
            require_id(id);
            if (lookup(id)) {
                throw SessionError(SessionError::Code::Busy, "session '" + id + "' already exists");
            }
            auto lock = claim(*source.session);
            Entry replayed{nullptr, source.meta};
            replayed.meta.session_id = id;
            json extra = json::object();
            if (mode == "exact") {
                auto r = replay_exact(*source.session, id);
                replayed.session = std::move(r.session);
                replayed.meta.parent.reset();
                replayed.meta.prefix_events = 0;
                extra = {{"identical", r.identical}, {"first_divergence", r.first_divergence}};
            } else if (mode == "with") {
                if (!body.contains("controls")) {
                    throw SessionError(SessionError::Code::InvalidControl, "replay with controls needs controls");
                }
                replayed.session = replay_with(*source.session, controls_from_json(body["controls"]), id);
                replayed.meta.parent = ParentRef{source.meta.session_id, 1};
                replayed.meta.prefix_events = 0;
                extra = {{"first_divergence", first_divergence(source.session->events(), replayed.session->events())}};
            } else {
                throw SessionError(SessionError::Code::InvalidControl, "replay mode must be exact or with");
            }
            lock.unlock();
            add(replayed);
            extra["session"] = summary(replayed);
            reply(res, 201, extra);
        }));

        server.Get(s + "/emr", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            const auto role = req.get_param_value("role");
            const auto& st = e.session->state();
            if (role.empty() || !st.agents.contains(role)) {
                throw SessionError(SessionError::Code::UnknownAgent, "unknown role '" + role + "'");
            }
            const LogicalTime at{st.cursor, 0};
            json records = json::array();
            for (const auto& r : st.emr.visible(role, at, st.policy, st.overlay)) {
                records.push_back(record_json(r));
            }
            reply(res, 200, {{"role", role}, {"at", {{"encounter", at.encounter}, {"step", at.step}}}, {"records", records}});
        }));

        server.Get(s + "/beliefs", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            const auto& obs = e.session->state().observations;
            if (req.get_param_value("format") == "csv") {
                res.status = 200;
                res.set_content(observations_csv(obs), "text/csv");
                return;
            }
            json list = json::array();
            for (const auto& o : obs) {
                list.push_back(observation_json(o));
            }
            reply(res, 200, {{"session_id", e.session->id()}, {"observations", list}});
        }));

        server.Get(s + "/transcript", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            json list = json::array();
            for (const auto& t : e.session->transcripts()) {
                list.push_back(transcript_json(t));
            }
            reply(res, 200, {{"session_id", e.session->id()}, {"transcripts", list}});
        }));

        server.Get(s + "/ledger", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto e = require(req.matches[1]);
            reply(res, 200, e.session->ledger().to_json());
        }));

        server.Get(s + "/diff/([^/]+)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto a = require(req.matches[1]);
            auto b = require(req.matches[2]);
            reply(res, 200,
                  {{"a", a.session->id()}, {"b", b.session->id()}, {"rows", diff_json(diff_beliefs(*a.session, *b.session))}});
        }));

        server.Get(s + "/events", [this](const httplib::Request& req, httplib::Response& res) {
            std::shared_ptr<DebugSession> session;
            try {
                session = require(req.matches[1]).session;
            } catch (const std::exception& e) {
                reply(res, http_status_for(e), {{"error", e.what()}, {"status", http_status_for(e)}});
                return;
            }
            std::size_t from = 0;
            if (req.has_param("from")) {
                from = std::stoul(req.get_param_value("from"));
            } else if (req.has_header("Last-Event-ID")) {
                from = std::stoul(req.get_header_value("Last-Event-ID")) + 1;
            }
            const bool follow = req.get_param_value("follow") != "false" && req.get_param_value("follow") != "0";
            auto next = std::make_shared<std::size_t>(from);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [this, session, next, follow](std::size_t, httplib::DataSink& sink) {
                    if (stopping || !sink.is_writable()) {
                        sink.done();
                        return true;
                    }
                    const auto events = session->events_since(*next, std::chrono::milliseconds(follow ? 500 : 0));
                    if (events.empty()) {
                        if (!follow) {
                            sink.done();
                            return true;
                        }
                        static const std::string keepalive = ": keepalive\n\n";
                        return sink.write(keepalive.data(), keepalive.size());
                    }
                    std::string chunk;
                    for (const auto& ev : events) {
                        auto j = event_json(ev);
                        j["session_id"] = session->id();
                        chunk += "id: " + std::to_string(ev.index) + "\nevent: " + to_string(ev.kind) +
                                 "\ndata: " + j.dump() + "\n\n";
                        *next = ev.index + 1;
                    }
                    return sink.write(chunk.data(), chunk.size());
                });
        });

        server.Post("/api/v1/experiments", guarded([this](const httplib::Request& req, httplib::Response& res) { start_experiment(req, res); }));

        server.Get("/api/v1/experiments/([^/]+)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto x = experiment(req.matches[1]);
            std::lock_guard lock(mutex);
            json failures = json::array();
            for (const auto& f : x->set.failures) {
                failures.push_back({{"run_id", f.run_id}, {"error", f.error}});
            }
            reply(res, 200,
                  {{"experiment_id", x->id},
                   {"status", to_string(x->status)},
                   {"error", x->error},
                   {"planned_runs", x->planned_runs},
                   {"completed_runs", x->set.runs()},
                   {"failures", failures}});
        }));

        server.Get("/api/v1/experiments/([^/]+)/results", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto x = experiment(req.matches[1]);
            std::lock_guard lock(mutex);
            if (x->status != ExperimentStatus::Completed) {
                throw SessionError(SessionError::Code::Busy,
                                   "experiment '" + x->id + "' is " + to_string(x->status) +
                                       (x->error.empty() ? "" : ": " + x->error));
            }
            if (req.get_param_value("format") == "csv") {
                res.status = 200;
                res.set_content(x->csv, "text/csv");
                return;
            }
            reply(res, 200, x->stats);
        }));
    }

    std::shared_ptr<ExperimentEntry> experiment(const std::string& id) {
        std::lock_guard lock(mutex);
        auto it = experiments.find(id);
        if (it == experiments.end()) {
            throw SessionError(SessionError::Code::NotFound, "unknown experiment '" + id + "'");
        }
        return it->second;
    }

    fs::path scenario_path(const json& body) const {
        if (body.contains("scenario")) {
            return body["scenario"].get<std::string>();
        }
        if (options.default_scenario.empty()) {
            throw SessionError(SessionError::Code::InvalidControl, "no scenario given and no default configured");
        }
        return options.default_scenario;
    }

    std::optional<int> scenario_id(const json& body) const {
        if (body.contains("scenario_id") && !body["scenario_id"].is_null()) {
            return body["scenario_id"].get<int>();
        }
        return body.contains("scenario") ? std::nullopt : options.default_scenario_id;
    }

    void create(const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        SessionMeta meta;
        meta.scenario_config = fs::absolute(scenario_path(body));
        const auto scenario = runtime.scenario(meta.scenario_config, scenario_id(body));
        meta.scenario_id = scenario->config.scenario_id;
        meta.salt = body.value("salt", std::uint64_t{0});
        meta.use_cache = body.value("use_cache", true);
        meta.provider = body.value("provider", options.provider);
        meta.script = body.contains("script") ? fs::path(body["script"].get<std::string>()) : options.script;
        meta.annotations = body.value("annotations", std::map<std::string, std::string>{});
        meta.session_id = body.contains("session_id") ? body["session_id"].get<std::string>() : fresh_id("s");
        require_id(meta.session_id);
        if (lookup(meta.session_id)) {
            throw SessionError(SessionError::Code::Busy, "session '" + meta.session_id + "' already exists");
        }
        auto gateway = runtime.gateway(*scenario, meta.provider, meta.script);
        Entry e{std::make_shared<DebugSession>(scenario, gateway, meta.session_id,
                                               runtime.engine_options(meta, *scenario)),
                meta};
        if (body.contains("breakpoints")) {
            e.session->set_breakpoints(body["breakpoints"].get<std::set<int>>());
        }
        add(e);
        reply(res, 201, summary(e));
    }

    void start_experiment(const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        PlanOptions po;
        po.experiment_id = body.contains("experiment_id") ? body["experiment_id"].get<std::string>() : fresh_id("x");
        require_id(po.experiment_id);
        po.anchor = body.value("anchor", po.anchor);
        po.focus_role = body.value("focus_role", po.focus_role);
        po.block_sizes = body.value("block_sizes", po.block_sizes);
        po.closing_encounters = body.value("closing_encounters", po.closing_encounters);
        po.probe_id = body.value("probe_id", po.probe_id);
        if (body.contains("temperature")) {
            po.temperature = body["temperature"].get<double>();
        }
        const auto config = fs::absolute(scenario_path(body));
        const auto base = runtime.scenario(config, scenario_id(body));
        std::vector<Role> roles;
        if (body.contains("roles")) {
            roles = body["roles"].get<std::vector<Role>>();
        } else {
            for (const auto& r : base->specialist_roles()) {
                if (r != po.anchor) {
                    roles.push_back(r);
                }
            }
        }
        auto plan = build_plan(roles, body.value("replicates", 3), base, po);
        auto gateway = runtime.gateway(*base, body.value("provider", options.provider),
                                       body.contains("script") ? fs::path(body["script"].get<std::string>())
                                                               : options.script);
        ExecuteOptions eo;
        eo.call.use_cache = body.value("use_cache", true);
        eo.concurrency = body.value("concurrency", 1u);
        eo.summaries_dir = base->config.summaries_dir;

        auto entry = std::make_shared<ExperimentEntry>();
        entry->id = po.experiment_id;
        entry->planned_runs = plan.total_runs();
        {
            std::lock_guard lock(mutex);
            if (experiments.contains(entry->id)) {
                throw SessionError(SessionError::Code::Busy, "experiment '" + entry->id + "' already exists");
            }
            experiments[entry->id] = entry;
            workers.emplace_back([this, entry, plan = std::move(plan), gateway, eo] {
                try {
                    auto set = execute_plan(plan, *gateway, eo);
                    const auto analyses = standard_analyses(plan, set);
                    write_experiment(options.root, plan, set, analyses);
                    auto stats = stats_json(plan, set, analyses);
                    auto csv = trajectories_csv(set);
                    std::lock_guard lock(mutex);
                    entry->set = std::move(set);
                    entry->stats = std::move(stats);
                    entry->csv = std::move(csv);
                    entry->status = ExperimentStatus::Completed;
                } catch (const std::exception& e) {
                    std::lock_guard lock(mutex);
                    entry->error = e.what();
                    entry->status = ExperimentStatus::Failed;
                }
            });
        }
        reply(res, 202, {{"experiment_id", entry->id}, {"status", "running"}, {"planned_runs", entry->planned_runs}});
    }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        return impl_->server.bind_to_any_port(host);
    }
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Service::run() { return impl_->server.listen_after_bind(); }

void Service::stop() {
    impl_->stopping = true;
    impl_->server.stop();
}

std::shared_ptr<DebugSession> Service::find(const std::string& session_id) {
    auto e = impl_->lookup(session_id);
    return e ? e->session : nullptr;
}

}  // namespace whai
