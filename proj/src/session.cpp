#include "whai/session.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include <algorithm>

using nlohmann::json;

namespace whai {

namespace {

[[noreturn]] void invalid(const std::string& message) {
    throw SessionError(SessionError::Code::InvalidControl, message);
}

void check_fields(const json& j, const std::set<std::string>& allowed, const std::string& what) {
    if (!j.is_object()) {
        invalid(what + " must be an object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.contains(it.key())) {
            invalid("unknown field '" + it.key() + "' in " + what);
        }
    }
}

std::string mode_name(LabInjectionMode m) { return m == LabInjectionMode::OracleUpsert ? "oracle-upsert" : "emr-direct"; }

LabInjectionMode parse_mode(const std::string& s) {
    if (s == "oracle-upsert") return LabInjectionMode::OracleUpsert;
    if (s == "emr-direct") return LabInjectionMode::EmrDirect;
    invalid("unknown lab injection mode '" + s + "'");
}

}  // namespace

bool ControlSet::empty() const {
    return priming.empty() && !exposure && probes.empty() && !encounter_order && labs.empty() && voices.empty() &&
           !emr_prompt;
}

json controls_json(const ControlSet& c) {
    json j = json::object();
    if (!c.priming.empty()) {
        json list = json::array();
        for (const auto& p : c.priming) {
            json e{{"doc_id", p.doc_id}, {"text", p.text}};
            if (!p.agent.empty()) {
                e["agent"] = p.agent;
            }
            list.push_back(e);
        }
        j["priming"] = list;
    }
    if (c.exposure) {
        json hidden_for_role = json::object();
        for (const auto& [role, ids] : c.exposure->overlay.hidden_for_role) {
            hidden_for_role[role] = std::vector<std::uint64_t>(ids.begin(), ids.end());
        }
        json rules = json::object();
        for (const auto& [role, v] : c.exposure->rules) {
            rules[role] = to_string(v);
        }
        json overrides = json::array();
        for (const auto& o : c.exposure->overrides) {
            overrides.push_back({{"record", o.record_id}, {"role", o.role}, {"visible", o.visible}});
        }
        j["exposure"] = {{"hidden_record_ids", std::vector<std::uint64_t>(c.exposure->overlay.hidden_record_ids.begin(),
                                                                          c.exposure->overlay.hidden_record_ids.end())},
                         {"hidden_for_role", hidden_for_role},
                         {"scope", c.exposure->overlay.scope},
                         {"rules", rules},
                         {"overrides", overrides}};
    }
    if (!c.probes.empty()) {
        json list = json::array();
        for (const auto& p : c.probes) {
            list.push_back(probe_json(p));
        }
        j["probes"] = list;
    }
    if (c.encounter_order) {
        j["encounter_order"] = *c.encounter_order;
    }
    if (!c.labs.empty()) {
        json list = json::array();
        for (const auto& l : c.labs) {
            list.push_back({{"key", l.key}, {"result", l.result}, {"mode", mode_name(l.mode)}});
        }
        j["labs"] = list;
    }
    if (!c.voices.empty()) {
        j["voices"] = c.voices;
    }
    if (c.emr_prompt) {
        j["emr_prompt"] = *c.emr_prompt;
    }
    return j;
}

ControlSet controls_from_json(const json& j) {
    check_fields(j, {"priming", "exposure", "probes", "encounter_order", "labs", "voices", "emr_prompt"}, "controls");
    ControlSet c;
    try {
        if (j.contains("priming")) {
            for (const auto& e : j["priming"]) {
                check_fields(e, {"agent", "doc_id", "text"}, "priming entry");
                PrimingControl p;
                p.agent = e.value("agent", "");
                p.doc_id = e.value("doc_id", 0);
                p.text = e.at("text").get<std::string>();
                c.priming.push_back(std::move(p));
            }
        }
        if (j.contains("exposure")) {
            const auto& e = j["exposure"];
            check_fields(e, {"hidden_record_ids", "hidden_for_role", "scope", "rules", "overrides"}, "exposure");
            ExposureControl x;
            const auto hidden_ids = e.value("hidden_record_ids", json::array());
            const auto hidden_for_role = e.value("hidden_for_role", json::object());
            const auto rules = e.value("rules", json::object());
            const auto overrides = e.value("overrides", json::array());
            for (const auto& id : hidden_ids) {
                x.overlay.hidden_record_ids.insert(id.get<std::uint64_t>());
            }
            for (const auto& [role, ids] : hidden_for_role.items()) {
                for (const auto& id : ids) {
                    x.overlay.hidden_for_role[role].insert(id.get<std::uint64_t>());
                }
            }
            x.overlay.scope = e.value("scope", std::string("fork"));
            for (const auto& [role, v] : rules.items()) {
                try {
                    x.rules[role] = parse_visibility(v.get<std::string>());
                } catch (const SessionError&) {
                    throw;
                } catch (const Error& err) {
                    invalid(err.what());
                }
            }
            for (const auto& o : overrides) {
                check_fields(o, {"record", "role", "visible"}, "record override");
                x.overrides.push_back(
                    {o.at("record").get<std::uint64_t>(), o.at("role").get<std::string>(), o.at("visible").get<bool>()});
            }
            c.exposure = std::move(x);
        }
        if (j.contains("probes")) {
            for (const auto& p : j["probes"]) {
                try {
                    c.probes.push_back(probe_from_json(p));
                } catch (const SessionError&) {
                    throw;
                } catch (const Error& err) {
                    invalid(err.what());
                }
            }
        }
        if (j.contains("encounter_order")) {
            c.encounter_order = j["encounter_order"].get<std::vector<int>>();
        }
        if (j.contains("labs")) {
            for (const auto& l : j["labs"]) {
                check_fields(l, {"key", "result", "mode"}, "lab injection");
                c.labs.push_back({l.at("key").get<std::string>(), l.at("result").get<std::string>(),
                                  parse_mode(l.value("mode", std::string("oracle-upsert")))});
            }
        }
        if (j.contains("voices")) {
            c.voices = j["voices"].get<std::map<std::string, std::string>>();
        }
        if (j.contains("emr_prompt")) {
            c.emr_prompt = j["emr_prompt"].get<std::string>();
        }
    } catch (const json::exception& e) {
        invalid(std::string("malformed controls: ") + e.what());
    }
    return c;
}

bool BeliefDiffRow::same_value() const {
    if (!a || !b) {
        return false;
    }
    return a->display_value() == b->display_value() && a->parse_failed == b->parse_failed;
}

DebugSession::DebugSession(std::shared_ptr<const Scenario> scenario, std::shared_ptr<const Gateway> gateway,
                           std::string session_id, EngineOptions options)
    : scenario_(std::move(scenario)),
      gateway_(std::move(gateway)),
      id_(std::move(session_id)),
      engine_(*scenario_, *gateway_, std::move(options)),
      state_(SessionState::initial(*scenario_)) {
    record_boundary();
}

std::vector<Event> DebugSession::events() const {
    std::lock_guard lock(log_mutex_);
    return log_.events();
}

std::size_t DebugSession::event_count() const {
    std::lock_guard lock(log_mutex_);
    return log_.size();
}

std::vector<Event> DebugSession::events_since(std::size_t from, std::chrono::milliseconds wait) const {
    std::unique_lock lock(log_mutex_);
    log_cv_.wait_for(lock, wait, [&] { return log_.size() > from; });
    const auto& all = log_.events();
    if (from >= all.size()) {
        return {};
    }
    return {all.begin() + static_cast<long>(from), all.end()};
}

void DebugSession::emit(EventKind kind, json payload) {
    {
        std::lock_guard lock(log_mutex_);
        log_.append(kind, state_.cursor, std::move(payload));
    }
    log_cv_.notify_all();
}

void DebugSession::record_boundary() {
    const auto k = static_cast<std::size_t>(state_.cursor);
    if (boundaries_.size() >= k) {
        boundaries_.resize(k - 1);
    }
    boundaries_.push_back({state_, breakpoints_});
}

void DebugSession::set_breakpoints(std::set<int> breakpoints) {
    for (int b : breakpoints) {
        if (b < 1 || b > state_.total()) {
            throw SessionError(SessionError::Code::InvalidTarget,
                               "breakpoint " + std::to_string(b) + " is outside 1.." + std::to_string(state_.total()));
        }
    }
    breakpoints_ = std::move(breakpoints);
    emit(EventKind::RunState, json{{"state", "breakpoints"},
                                   {"command", "breakpoints"},
                                   {"breakpoints", std::vector<int>(breakpoints_.begin(), breakpoints_.end())}});
}

void DebugSession::emit_outcome(const EncounterOutcome& outcome) {
    // Everything produced by the step carries the position it ran at.
    std::lock_guard lock(log_mutex_);
    const int p = outcome.position;
    log_.append(EventKind::RunState, p, json{{"state", "running"}, {"command", "step"}, {"encounter_id", outcome.encounter_id}});
    for (const auto& e : outcome.events) {
        log_.append(engine_event_kind(e), p, engine_event_json(e));
    }
    json done{{"state", state_.finished() ? "completed" : "paused"},
              {"cursor", state_.cursor},
              {"encounter_id", outcome.encounter_id},
              {"terminal", to_string(outcome.transcript.terminal)}};
    if (!outcome.dropped_lab_keys.empty()) {
        done["dropped_lab_keys"] = outcome.dropped_lab_keys;
    }
    log_.append(EventKind::RunState, p, done);
    if (breakpoints_.contains(state_.cursor)) {
        log_.append(EventKind::BreakpointHit, p, json{{"breakpoint", state_.cursor}});
    }
}

EncounterOutcome DebugSession::step() {
    if (state_.finished()) {
        throw SessionError(SessionError::Code::EndOfScenario, "scenario already finished");
    }
    auto outcome = engine_.run_next(state_);
    ledger_.append(outcome.ledger);
    emit_outcome(outcome);
    log_cv_.notify_all();
    record_boundary();
    return outcome;
}

std::vector<EncounterOutcome> DebugSession::run_until(std::optional<int> target) {
    const int end = state_.total() + 1;
    const int t = target.value_or(end);
    if (t < state_.cursor) {
        throw SessionError(SessionError::Code::InvalidTarget, "target " + std::to_string(t) +
                                                                  " is before the cursor " + std::to_string(state_.cursor));
    }
    if (t > end) {
        throw SessionError(SessionError::Code::InvalidTarget, "target " + std::to_string(t) + " is past the end");
    }
    std::vector<EncounterOutcome> out;
    while (state_.cursor < t) {
        out.push_back(step());
        if (breakpoints_.contains(state_.cursor)) {
            break;
        }
    }
    return out;
}

std::vector<EncounterOutcome> DebugSession::run_to_end() {
    std::vector<EncounterOutcome> out;
    while (!state_.finished()) {
        out.push_back(step());
    }
    return out;
}

void DebugSession::apply_controls(const ControlSet& c) {
    if (c.empty()) {
        invalid("no controls given");
    }
    SessionState next = state_;
    const auto& config = scenario_->config;

    for (const auto& p : c.priming) {
        if (trim(p.text).empty()) {
            invalid("priming text is empty");
        }
        if (p.doc_id < 0) {
            invalid("document ids are non-negative");
        }
        if (p.agent.empty()) {
            next.global_doc += (trim(next.global_doc).empty() ? "" : "\n\n") + trim_right(p.text);
        } else {
            if (!next.agents.contains(p.agent)) {
                invalid("priming names unknown agent '" + p.agent + "'");
            }
            next.pending_primes.push_back({p.agent, p.doc_id, p.text});
        }
    }

    if (c.exposure) {
        const auto& x = *c.exposure;
        next.overlay.hidden_record_ids.insert(x.overlay.hidden_record_ids.begin(), x.overlay.hidden_record_ids.end());
        for (const auto& [role, ids] : x.overlay.hidden_for_role) {
            next.overlay.hidden_for_role[role].insert(ids.begin(), ids.end());
        }
        next.overlay.scope = x.overlay.scope;
        for (const auto& [role, v] : x.rules) {
            if (!next.agents.contains(role)) {
                invalid("exposure names unknown agent '" + role + "'");
            }
            next.policy.rules[role] = v;
        }
        for (const auto& o : x.overrides) {
            if (!next.agents.contains(o.role)) {
                invalid("exposure names unknown agent '" + o.role + "'");
            }
            next.policy.overrides.insert(next.policy.overrides.begin(), o);
        }
    }

    for (auto p : c.probes) {
        try {
            compile_probe(p);
        } catch (const Error& e) {
            invalid(e.what());
        }
        for (const auto& t : p.targets) {
            if (t != kTargetAll && t != kTargetDoctor && !next.agents.contains(t)) {
                invalid("probe targets unknown agent '" + t + "'");
            }
        }
        auto it = std::find_if(next.probes.begin(), next.probes.end(),
                               [&p](const BeliefProbe& q) { return q.id == p.id; });
        if (it != next.probes.end()) {
            *it = p;
        } else {
            next.probes.push_back(p);
        }
    }

    if (c.encounter_order) {
        const auto& order = *c.encounter_order;
        std::vector<int> a = order;
        std::vector<int> b = next.order;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) {
            invalid("encounter order must be a permutation of the scenario's encounters");
        }
        for (int i = 0; i + 1 < next.cursor; ++i) {
            if (order[static_cast<std::size_t>(i)] != next.order[static_cast<std::size_t>(i)]) {
                invalid("encounter order changes an encounter that already ran");
            }
        }
        next.order = order;
    }

    std::vector<EmrRecord> injected;
    for (const auto& l : c.labs) {
        if (trim(l.key).empty() || trim(l.result).empty()) {
            invalid("lab injection needs a key and a result");
        }
        if (l.mode == LabInjectionMode::OracleUpsert) {
            if (next.hidden.is_released(l.key)) {
                invalid("lab '" + l.key + "' was already released");
            }
            next.hidden.entries[l.key] = l.result;
        } else {
            EmrRecord r;
            r.encounter_id = next.finished() ? 0 : next.order[static_cast<std::size_t>(next.cursor - 1)];
            r.author_role = config.lab_role;
            r.sim_time = LogicalTime{next.cursor, 0};
            r.body = release_record_body(LabRelease{l.key, l.result, r.sim_time, "", ""});
            r.tags = {kTagCounterfactual, kTagLabRelease};
            r.display_time = iso8601_now();
            next.emr.append(r);
            injected.push_back(next.emr.records().back());
        }
    }

    for (const auto& [role, voice] : c.voices) {
        auto it = next.agents.find(role);
        if (it == next.agents.end()) {
            invalid("voice override names unknown agent '" + role + "'");
        }
        it->second.voice_text = voice;
    }

    if (c.emr_prompt) {
        if (trim(*c.emr_prompt).empty()) {
            invalid("EMR prompt override is empty");
        }
        next.emr_prompt = *c.emr_prompt;
    }

    state_ = std::move(next);
    emit(EventKind::ControlApplied, json{{"controls", controls_json(c)}, {"cursor", state_.cursor}});
    for (const auto& r : injected) {
        emit(EventKind::EmrRecord, record_json(r));
    }
}

BeliefObservation DebugSession::probe(const Role& agent, const BeliefProbe& probe) {
    if (!state_.agents.contains(agent)) {
        throw SessionError(SessionError::Code::UnknownAgent, "unknown agent '" + agent + "'");
    }
    BeliefProbe p = probe;
    if (!p.compiled) {
        try {
            compile_probe(p);
        } catch (const Error& e) {
            invalid(e.what());
        }
    }
    auto obs = engine_.probe_on_demand(state_, agent, p, ledger_);
    auto payload = observation_json(obs);
    payload["probe"] = probe_json(p);
    emit(EventKind::BeliefObservation, payload);
    return obs;
}

BeliefObservation DebugSession::probe(const Role& agent, const std::string& probe_id) {
    for (const auto& p : state_.probes) {
        if (p.id == probe_id) {
            return probe(agent, p);
        }
    }
    throw SessionError(SessionError::Code::NotFound, "no probe '" + probe_id + "'");
}

std::unique_ptr<DebugSession> DebugSession::fork(int at, const ControlSet& controls, std::string child_id) const {
    if (at < 1 || at > state_.cursor) {
        throw SessionError(SessionError::Code::InvalidForkPoint, "fork point " + std::to_string(at) +
                                                                     " must lie in 1.." + std::to_string(state_.cursor));
    }
    auto child = std::make_unique<DebugSession>(scenario_, gateway_, std::move(child_id), engine_.options());
    const auto& boundary = boundaries_[static_cast<std::size_t>(at - 1)];
    child->state_ = boundary.state;
    child->breakpoints_ = boundary.breakpoints;
    child->boundaries_.assign(boundaries_.begin(), boundaries_.begin() + at);
    {
        std::lock_guard lock(log_mutex_);
        for (const auto& e : log_.prefix_before(at)) {
            child->log_.adopt(e);
        }
    }
    child->parent_ = ParentRef{id_, at};
    if (!controls.empty()) {
        child->apply_controls(controls);
    }
    return child;
}

std::unique_ptr<DebugSession> DebugSession::redrive(std::shared_ptr<const Scenario> scenario,
                                                    std::shared_ptr<const Gateway> gateway, std::string session_id,
                                                    EngineOptions options, const std::vector<Event>& events) {
    auto s = std::make_unique<DebugSession>(std::move(scenario), std::move(gateway), std::move(session_id),
                                            std::move(options));
    for (const auto& e : events) {
        const auto& p = e.payload;
        const bool is_command =
            (e.kind == EventKind::RunState && p.contains("command")) || e.kind == EventKind::ControlApplied ||
            (e.kind == EventKind::BeliefObservation && p.value("phase", "") == to_string(ProbePhase::OnDemand));
        if (!is_command) {
            continue;
        }
        if (e.encounter != s->cursor()) {
            throw Error("event " + std::to_string(e.index) + " was recorded at position " + std::to_string(e.encounter) +
                        " but the rebuilt session is at " + std::to_string(s->cursor()));
        }
        if (e.kind == EventKind::RunState) {
            const auto command = p.at("command").get<std::string>();
            if (command == "step") {
                s->step();
            } else if (command == "breakpoints") {
                const auto list = p.at("breakpoints").get<std::vector<int>>();
                s->set_breakpoints(std::set<int>(list.begin(), list.end()));
            } else {
                throw Error("unknown recorded command '" + command + "'");
            }
        } else if (e.kind == EventKind::ControlApplied) {
            s->apply_controls(controls_from_json(p.at("controls")));
        } else {
            s->probe(p.at("agent_role").get<std::string>(), probe_from_json(p.at("probe")));
        }
    }
    return s;
}

void DebugSession::adopt_display_times(const std::vector<Event>& recorded) {
    std::lock_guard lock(log_mutex_);
    if (behavioral_form(recorded) != behavioral_form(log_.events())) {
        throw Error("recorded log does not match the rebuilt session");
    }
    EventLog log;
    for (const auto& e : recorded) {
        log.adopt(e);
    }
    log_ = std::move(log);
}

std::size_t first_divergence(const std::vector<Event>& a, const std::vector<Event>& b) {
    const auto n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (strip_display_times(event_json(a[i])) != strip_display_times(event_json(b[i]))) {
            return i;
        }
    }
    return n;
}

ReplayResult replay_exact(const DebugSession& source, const std::string& replay_id) {
    auto options = source.options();
    if (source.gateway_ptr()->provider()->kind() == Provenance::Live) {
        options.call.use_cache = true;
        options.call.cache_only = true;
    }
    const auto recorded = source.events();
    ReplayResult result;
    result.session =
        DebugSession::redrive(source.scenario_ptr(), source.gateway_ptr(), replay_id, options, recorded);
    const auto replayed = result.session->events();
    result.first_divergence = first_divergence(recorded, replayed);
    result.identical = recorded.size() == replayed.size() && result.first_divergence == recorded.size();
    return result;
}

std::unique_ptr<DebugSession> replay_with(const DebugSession& source, const ControlSet& controls,
                                          const std::string& replay_id) {
    auto child = source.fork(1, controls, replay_id);
    child->run_to_end();
    return child;
}

std::vector<BeliefDiffRow> diff_beliefs(const DebugSession& a, const DebugSession& b) {
    auto ids = [](const DebugSession& s) {
        std::set<std::string> out;
        for (const auto& p : s.state().probes) {
            out.insert(p.id);
        }
        return out;
    };
    if (ids(a) != ids(b)) {
        throw SessionError(SessionError::Code::ProbeMismatch, "sessions " + a.id() + " and " + b.id() +
                                                                  " define different probe ids");
    }
    using Key = std::tuple<Role, int, ProbePhase, std::string>;
    std::vector<Key> order;
    std::map<Key, BeliefDiffRow> rows;
    auto add = [&](const DebugSession& s, bool first) {
        for (const auto& o : s.state().observations) {
            Key k{o.agent_role, o.encounter_id, o.phase, o.probe_id};
            auto [it, inserted] = rows.try_emplace(k);
            if (inserted) {
                order.push_back(k);
                it->second.agent = o.agent_role;
                it->second.encounter_id = o.encounter_id;
                it->second.phase = o.phase;
                it->second.probe_id = o.probe_id;
            }
            (first ? it->second.a : it->second.b) = o;
        }
    };
    add(a, true);
    add(b, false);
    std::vector<BeliefDiffRow> out;
    for (const auto& k : order) {
        auto row = rows.at(k);
        if (row.a && row.b && row.a->score && row.b->score) {
            row.delta = *row.b->score - *row.a->score;
        }
        out.push_back(std::move(row));
    }
    return out;
}

json diff_json(const std::vector<BeliefDiffRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"agent", r.agent},
                       {"encounter_id", r.encounter_id},
                       {"phase", to_string(r.phase)},
                       {"probe_id", r.probe_id},
                       {"a", r.a ? observation_json(*r.a) : json(nullptr)},
                       {"b", r.b ? observation_json(*r.b) : json(nullptr)},
                       {"value_a", r.a ? json(r.a->display_value()) : json(nullptr)},
                       {"value_b", r.b ? json(r.b->display_value()) : json(nullptr)},
                       {"delta", r.delta ? json(*r.delta) : json(nullptr)},
                       {"same", r.same_value()}});
    }
    return out;
}

}  // namespace whai
