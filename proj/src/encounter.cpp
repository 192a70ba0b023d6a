#include "whai/encounter.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include <algorithm>
#include <regex>

namespace whai {

std::string to_string(Channel channel) { return channel == Channel::OnRecord ? "on-record" : "out-of-band"; }

Channel parse_channel(const std::string& s) {
    if (s == "on-record") return Channel::OnRecord;
    if (s == "out-of-band") return Channel::OutOfBand;
    throw Error("unknown channel '" + s + "'");
}

std::string to_string(TerminalReason reason) {
    return reason == TerminalReason::TurnLimit ? "turn-limit" : "natural-close";
}

TerminalReason parse_terminal_reason(const std::string& s) {
    if (s == "turn-limit") return TerminalReason::TurnLimit;
    if (s == "natural-close") return TerminalReason::NaturalClose;
    throw Error("unknown terminal reason '" + s + "'");
}

std::string transcript_text(const Transcript& transcript) {
    std::string out;
    for (const auto& m : transcript.messages) {
        out += display_name(m.speaker) + ": " + m.content + "\n";
    }
    return out;
}

SessionState SessionState::initial(const Scenario& scenario) {
    SessionState s;
    for (const auto& e : scenario.encounters) {
        s.order.push_back(e.encounter_id);
    }
    s.agents = scenario.agents;
    s.global_doc = scenario.global_document;
    s.probes = scenario.config.belief_probes;
    s.emr_prompt = scenario.config.emr_prompt.empty() ? default_emr_prompt() : scenario.config.emr_prompt;
    s.policy = scenario.config.records_policy;
    s.hidden = scenario.hidden_labs;
    return s;
}

std::string compose_system_prompt(const AgentSpec& agent, const ScenarioConfig& config, const std::string& global_doc) {
    std::string out = trim_right(agent.persona_text);
    auto add = [&out](const std::string& part) {
        if (part.empty()) {
            return;
        }
        if (!out.empty()) {
            out += "\n\n";
        }
        out += part;
    };
    add(trim_right(agent.voice_text));
    if (agent.role != config.moderator_role) {
        add(trim_right(config.doctor_prefix));
    }
    if (!trim(global_doc).empty()) {
        add("Reference material shared with everyone:\n" + trim_right(global_doc));
    }
    for (const auto& doc : agent.primed_docs) {
        add("Your notes on document " + std::to_string(doc.doc_id) + ":\n" + trim_right(doc.summary));
    }
    return out;
}

bool looks_like_persona_break(const std::string& text) {
    static const std::regex meta(
        R"(\b(as an ai|i am an ai|i'm an ai|as a language model|language model|this (is a )?simulation|my (system )?instructions|i am (just )?a simulated)\b)",
        std::regex::ECMAScript | std::regex::icase);
    return std::regex_search(text, meta);
}

std::vector<Role> resolve_probe_targets(const BeliefProbe& probe, const Role& doctor, const Scenario& scenario) {
    std::vector<Role> out;
    auto add = [&out](const Role& r) {
        if (std::find(out.begin(), out.end(), r) == out.end()) {
            out.push_back(r);
        }
    };
    if (probe.targets.empty()) {
        add(doctor);
        return out;
    }
    for (const auto& t : probe.targets) {
        if (t == kTargetDoctor) {
            add(doctor);
        } else if (t == kTargetAll) {
            for (const auto& r : scenario.specialist_roles()) {
                add(r);
            }
        } else {
            add(t);
        }
    }
    return out;
}

EncounterEngine::EncounterEngine(const Scenario& scenario, const Gateway& gateway, EngineOptions options)
    : scenario_(scenario), gateway_(gateway), options_(std::move(options)) {}

std::string EncounterEngine::system_prompt(const SessionState& state, const Role& role) const {
    auto it = state.agents.find(role);
    if (it == state.agents.end()) {
        throw SessionError(SessionError::Code::UnknownAgent, "unknown agent '" + role + "'");
    }
    return compose_system_prompt(it->second, scenario_.config, state.global_doc);
}

struct EncounterEngine::Run {
    const EncounterEngine& eng;
    SessionState& st;
    EncounterOutcome& out;
    int position;
    const EncounterSpec* spec;
    int step = 1;
    std::map<std::pair<Role, bool>, std::string> memo;
    std::map<Role, std::vector<std::string>> notes;

    int encounter_id() const { return spec != nullptr ? spec->encounter_id : 0; }

    RequestDefaults defaults() const {
        const auto& c = eng.scenario_.config;
        return RequestDefaults{c.model_id, c.temperature, c.max_tokens, eng.options_.salt};
    }

    CompletionRequest request(const Role& role, CallPurpose purpose) const {
        const auto d = defaults();
        CompletionRequest r;
        r.model_id = d.model_id;
        r.temperature = d.temperature;
        r.max_tokens = d.max_tokens;
        r.salt = d.salt;
        r.annotations = eng.options_.annotations;
        r.annotations["purpose"] = to_string(purpose);
        r.annotations["role"] = role;
        r.annotations["encounter"] = std::to_string(encounter_id());
        r.annotations["position"] = std::to_string(position);
        r.timestamp = iso8601_now();
        return r;
    }

    CompletionResponse call(const CompletionRequest& r, const Role& role, CallPurpose purpose) {
        return eng.gateway_.complete(r, eng.options_.call, CallInfo{role, encounter_id(), purpose}, &out.ledger);
    }

    void log(Message m) {
        m.seq = st.next_seq++;
        m.encounter_id = encounter_id();
        m.position = position;
        m.display_time = iso8601_now();
        st.messages.push_back(m);
        out.events.emplace_back(std::move(m));
    }

    void note(const Role& owner, const Role& speaker, const std::string& purpose, const std::string& content,
              Usage usage = {}) {
        Message m;
        m.speaker = speaker;
        m.channel = Channel::OutOfBand;
        m.purpose = purpose;
        m.audience = owner;
        m.content = content;
        m.usage = usage;
        log(std::move(m));
        notes[owner].push_back(content);
    }

    const EmrRecord& record(const Role& author, std::string body, std::set<std::string> tags,
                            std::optional<LogicalTime> at = {}) {
        EmrRecord r;
        r.encounter_id = encounter_id();
        r.author_role = author;
        r.sim_time = at.value_or(LogicalTime{position, step++});
        r.body = std::move(body);
        r.tags = std::move(tags);
        r.display_time = iso8601_now();
        st.emr.append(r);
        const auto& stored = st.emr.records().back();
        out.events.emplace_back(stored);
        return stored;
    }

    bool participates(const Transcript& t, const Role& role) const {
        return role == eng.scenario_.config.moderator_role || t.doctor_role == role;
    }

    static std::string visit_text(const Transcript& t) {
        return "### Encounter " + std::to_string(t.position) + ": visit with the " + display_name(t.doctor_role) +
               "\n" + transcript_text(t);
    }

    // The agent's own prior visits, condensed by a gateway call when they no
    // longer fit the token budget. Only dialogue is ever condensed.
    std::string memory(const Role& role, bool include_current) {
        const auto key = std::make_pair(role, include_current);
        if (auto it = memo.find(key); it != memo.end()) {
            return it->second;
        }
        std::vector<std::string> visits;
        for (const auto& t : st.transcripts) {
            const bool in_range = include_current ? t.position <= position : t.position < position;
            if (in_range && participates(t, role)) {
                visits.push_back(visit_text(t));
            }
        }
        std::string text = join(visits, "\n");
        const auto budget = eng.scenario_.config.history_token_budget;
        if (budget > 0 && estimate_tokens(text) > budget) {
            std::size_t keep_from = visits.size();
            std::int64_t kept = 0;
            while (keep_from > 0 && kept + estimate_tokens(visits[keep_from - 1]) <= budget / 2) {
                kept += estimate_tokens(visits[keep_from - 1]);
                --keep_from;
            }
            std::vector<std::string> older(visits.begin(), visits.begin() + static_cast<long>(keep_from));
            std::vector<std::string> recent(visits.begin() + static_cast<long>(keep_from), visits.end());
            auto r = request(role, CallPurpose::Pruning);
            r.messages.push_back({MessageRole::System, eng.system_prompt(st, role)});
            r.messages.push_back({MessageRole::User,
                                  "Condense your notes of these earlier visits into a short summary that keeps "
                                  "what you would want to remember:\n\n" +
                                      join(older, "\n")});
            const auto summary = call(r, role, CallPurpose::Pruning).content;
            text = "Summary of earlier visits:\n" + trim(summary);
            if (!recent.empty()) {
                text += "\n\n" + join(recent, "\n");
            }
        }
        memo[key] = text;
        return text;
    }

    void add_context(CompletionRequest& r, const Role& role, bool include_current) {
        r.messages.push_back({MessageRole::System, eng.system_prompt(st, role)});
        const auto mem = memory(role, include_current);
        if (!mem.empty()) {
            r.messages.push_back({MessageRole::System, "Your memory of earlier visits:\n" + mem});
        }
    }

    void add_notes(CompletionRequest& r, const Role& role) {
        auto it = notes.find(role);
        if (it == notes.end() || it->second.empty()) {
            return;
        }
        r.messages.push_back({MessageRole::System, "Private notes for this visit:\n" + join(it->second, "\n\n")});
    }

    bool can_read_emr(const Role& role) const {
        if (st.policy.class_for(role) != Visibility::None) {
            return true;
        }
        return std::any_of(st.policy.overrides.begin(), st.policy.overrides.end(),
                           [&role](const RecordOverride& o) { return o.role == role && o.visible; });
    }

    BeliefObservation probe(const Role& role, const BeliefProbe& p, ProbePhase phase, LogicalTime at,
                            bool include_current) {
        if (!st.agents.contains(role)) {
            throw SessionError(SessionError::Code::UnknownAgent, "probe targets unknown agent '" + role + "'");
        }
        auto r = request(role, CallPurpose::BeliefProbe);
        r.annotations["probe"] = p.id;
        r.annotations["phase"] = to_string(phase);
        add_context(r, role, include_current);
        if (can_read_emr(role)) {
            const auto visible = st.emr.visible(role, at, st.policy, st.overlay);
            r.messages.push_back({MessageRole::User, "Medical record available to you:\n" + render_history(visible)});
        }
        r.messages.push_back(
            {MessageRole::User, render_template(p.prompt_template, {{"role", role},
                                                                    {"encounter", std::to_string(encounter_id())},
                                                                    {"position", std::to_string(position)}})});
        const auto response = call(r, role, CallPurpose::BeliefProbe);
        auto obs = parse_belief(p, response.content);
        obs.agent_role = role;
        obs.encounter_id = encounter_id();
        obs.position = position;
        obs.phase = phase;
        st.observations.push_back(obs);
        out.events.emplace_back(obs);
        return obs;
    }

    void probes(ProbeSchedule schedule) {
        if (!eng.options_.run_probes) {
            return;
        }
        const auto phase = schedule == ProbeSchedule::PreEncounter ? ProbePhase::Pre : ProbePhase::Post;
        const LogicalTime at = schedule == ProbeSchedule::PreEncounter ? LogicalTime{position, 0}
                                                                       : LogicalTime{position, kLastStep};
        // Copy: a probe may not observe a probe list mutated mid-run.
        const auto list = st.probes;
        for (const auto& p : list) {
            if (p.schedule != schedule) {
                continue;
            }
            for (const auto& role : resolve_probe_targets(p, spec->doctor_role, eng.scenario_)) {
                probe(role, p, phase, at, schedule == ProbeSchedule::PostEncounter);
            }
        }
    }

    void internalize(const Role& role, int doc_id, const std::string& document) {
        auto& agent = st.agents.at(role);
        DocumentSummarizer summarizer(eng.gateway_, eng.options_.summaries_dir);
        auto annotations = eng.options_.annotations;
        annotations["position"] = std::to_string(position);
        const auto summary =
            summarizer.summarize(agent, doc_id, document, eng.system_prompt(st, role), defaults(), eng.options_.call,
                                 encounter_id(), &out.ledger, std::move(annotations));
        agent.primed_docs.push_back({doc_id, summary});
        note(role, role, kMsgDocSummary, "Internalized document " + std::to_string(doc_id) + ":\n" + summary);
    }

    void primes_and_prereads() {
        const auto pending = std::move(st.pending_primes);
        st.pending_primes.clear();
        for (const auto& p : pending) {
            if (!st.agents.contains(p.agent)) {
                throw SessionError(SessionError::Code::UnknownAgent, "priming targets unknown agent '" + p.agent + "'");
            }
            internalize(p.agent, p.doc_id, p.document);
        }
        const auto& doctor = st.agents.at(spec->doctor_role);
        for (int doc_id : spec->doctor_preread) {
            if (doc_id == kGlobalDocumentId) {
                continue;
            }
            const bool already = std::any_of(doctor.primed_docs.begin(), doctor.primed_docs.end(),
                                             [doc_id](const PrimedDocument& d) { return d.doc_id == doc_id; });
            if (!already) {
                internalize(spec->doctor_role, doc_id, eng.scenario_.document(doc_id));
            }
        }
    }

    void private_contexts() {
        const auto& moderator = eng.scenario_.config.moderator_role;
        if (!trim(spec->moderator_context).empty()) {
            note(moderator, kSpeakerSystem, kMsgPrivateContext, trim(spec->moderator_context));
        }
        if (!trim(spec->doctor_context).empty()) {
            note(spec->doctor_role, kSpeakerSystem, kMsgPrivateContext, trim(spec->doctor_context));
        }
    }

    void emr_review() {
        const auto& doctor = spec->doctor_role;
        if (!can_read_emr(doctor)) {
            return;
        }
        const auto visible = st.emr.visible(doctor, LogicalTime{position, 0}, st.policy, st.overlay);
        if (visible.empty()) {
            return;
        }
        auto r = request(doctor, CallPurpose::EmrReview);
        add_context(r, doctor, false);
        r.messages.push_back({MessageRole::User, "Before the visit, review the medical record available to you:\n\n" +
                                                     render_history(visible) +
                                                     "\nWrite brief private notes on what matters for today's visit."});
        const auto response = call(r, doctor, CallPurpose::EmrReview);
        note(doctor, doctor, kMsgEmrReview, response.content, response.usage);
    }

    void in_visit_labs() {
        const auto releases = force_in_visit_labs(*spec, LogicalTime{position, step});
        if (releases.empty()) {
            return;
        }
        std::string shown = "In-office test results available during this visit:";
        for (auto rel : releases) {
            const auto& rec = record(eng.scenario_.config.lab_role, release_record_body(rel), {kTagLabRelease, kTagInVisit});
            rel.released_at = rec.sim_time;
            st.releases.push_back(rel);
            out.events.emplace_back(rel);
            shown += "\n- " + rel.lab_key + ": " + rel.result_text;
        }
        notes[eng.scenario_.config.moderator_role].push_back(shown);
        notes[spec->doctor_role].push_back(shown);
    }

    Transcript dialogue() {
        const auto& moderator = eng.scenario_.config.moderator_role;
        const auto& doctor = spec->doctor_role;
        const auto& marker = eng.scenario_.config.closing_marker;
        Transcript t;
        t.encounter_id = encounter_id();
        t.position = position;
        t.doctor_role = doctor;
        t.terminal = TerminalReason::TurnLimit;

        auto speak = [&](const Role& speaker, int turn, std::string content, Usage usage) {
            Message m;
            m.speaker = speaker;
            m.channel = Channel::OnRecord;
            m.purpose = kMsgDialogue;
            m.turn = turn;
            m.content = std::move(content);
            m.usage = usage;
            m.persona_break = looks_like_persona_break(m.content);
            log(m);
            t.messages.push_back(st.messages.back());
        };

        speak(moderator, 1, spec->reason_for_visit, {});
        int moderator_turns = 1;
        int doctor_turns = 0;
        const int limit = std::max(1, spec->max_turns);
        while (true) {
            const bool doctor_next = t.messages.back().speaker == moderator;
            const Role& speaker = doctor_next ? doctor : moderator;
            int& count = doctor_next ? doctor_turns : moderator_turns;
            if (count >= limit) {
                break;
            }
            auto r = request(speaker, CallPurpose::Dialogue);
            r.annotations["turn"] = std::to_string(count + 1);
            add_context(r, speaker, false);
            add_notes(r, speaker);
            for (const auto& m : t.messages) {
                r.messages.push_back({m.speaker == speaker ? MessageRole::Assistant : MessageRole::User, m.content});
            }
            const auto response = call(r, speaker, CallPurpose::Dialogue);
            ++count;
            speak(speaker, count, response.content, response.usage);
            if (doctor_next && !marker.empty() && response.content.find(marker) != std::string::npos) {
                t.terminal = TerminalReason::NaturalClose;
                break;
            }
        }
        st.transcripts.push_back(t);
        return t;
    }

    const EmrRecord& emr_summary(const Transcript& t) {
        const auto& doctor = spec->doctor_role;
        auto r = request(doctor, CallPurpose::EmrSummary);
        add_context(r, doctor, false);
        add_notes(r, doctor);
        const auto instruction = render_template(st.emr_prompt, {{"role", display_name(doctor)},
                                                                 {"encounter", std::to_string(encounter_id())},
                                                                 {"closing_marker", eng.scenario_.config.closing_marker}});
        r.messages.push_back({MessageRole::User, instruction + "\n\nTranscript of this visit:\n" + transcript_text(t)});
        const auto response = call(r, doctor, CallPurpose::EmrSummary);
        return record(doctor, response.content, {});
    }

    void lab_oracle(const std::string& plan) {
        const auto& config = eng.scenario_.config;
        std::unique_ptr<LabMatcher> matcher;
        if (config.lab_matcher == LabMatcherKind::KeywordTable) {
            matcher = std::make_unique<KeywordMatcher>(eng.scenario_.lab_keywords);
        } else {
            LlmLabMatcher::Context c;
            c.gateway = &eng.gateway_;
            c.lab_persona = eng.scenario_.lab_persona;
            c.defaults = defaults();
            c.options = eng.options_.call;
            c.lab_role = config.lab_role;
            c.encounter = encounter_id();
            c.ledger = &out.ledger;
            c.annotations = eng.options_.annotations;
            c.annotations["position"] = std::to_string(position);
            matcher = std::make_unique<LlmLabMatcher>(std::move(c));
        }
        auto releases = release_for_orders(plan, st.hidden, *matcher, LogicalTime{position, step});
        out.dropped_lab_keys = matcher->dropped();
        for (auto& rel : releases) {
            const auto& rec = record(config.lab_role, release_record_body(rel), {kTagLabRelease});
            rel.released_at = rec.sim_time;
            st.releases.push_back(rel);
            out.events.emplace_back(rel);
        }
    }
};

EncounterOutcome EncounterEngine::run_next(SessionState& state) const {
    if (state.finished()) {
        throw SessionError(SessionError::Code::EndOfScenario, "no encounters left to run");
    }
    SessionState next = state;
    EncounterOutcome out;
    out.position = next.cursor;
    const auto& spec = scenario_.encounter(next.order[static_cast<std::size_t>(next.cursor - 1)]);
    out.encounter_id = spec.encounter_id;
    if (!next.agents.contains(spec.doctor_role)) {
        throw SessionError(SessionError::Code::UnknownAgent, "encounter names unknown agent '" + spec.doctor_role + "'");
    }

    Run run{*this, next, out, next.cursor, &spec, 1, {}, {}};
    run.probes(ProbeSchedule::PreEncounter);
    run.primes_and_prereads();
    run.private_contexts();
    run.emr_review();
    run.in_visit_labs();
    out.transcript = run.dialogue();
    const auto& summary = run.emr_summary(out.transcript);
    run.lab_oracle(summary.sections().plan);
    run.probes(ProbeSchedule::PostEncounter);
    next.cursor += 1;

    state = std::move(next);
    return out;
}

BeliefObservation EncounterEngine::probe_on_demand(SessionState& state, const Role& agent, const BeliefProbe& probe,
                                                   UsageLedger& ledger) const {
    SessionState next = state;
    EncounterOutcome out;
    const EncounterSpec* spec = nullptr;
    if (!next.finished()) {
        spec = &scenario_.encounter(next.order[static_cast<std::size_t>(next.cursor - 1)]);
    }
    Run run{*this, next, out, next.cursor, spec, 1, {}, {}};
    auto obs = run.probe(agent, probe, ProbePhase::OnDemand, LogicalTime{next.cursor, 0}, false);
    ledger.append(out.ledger);
    state = std::move(next);
    return obs;
}

}  // namespace whai
