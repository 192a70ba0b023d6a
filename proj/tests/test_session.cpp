#include "support.hpp"

#include "whai/error.hpp"
#include "whai/event_log.hpp"
#include "whai/session_store.hpp"
#include "whai/util.hpp"

#include <gtest/gtest.h>

#include <regex>

using namespace whai;
using namespace whai::test;

namespace {

/// Passes calls through until `fail_after` calls have been made, then throws.
class FlakyProvider : public Provider {
public:
    FlakyProvider(std::shared_ptr<Provider> inner, int fail_after) : left_(fail_after), inner_(std::move(inner)) {}
    CompletionResponse complete(const CompletionRequest& r) override {
        if (left_-- <= 0) {
            throw ProviderError("injected failure", true, 503);
        }
        return inner_->complete(r);
    }
    Provenance kind() const override { return Provenance::Scripted; }
    int left_;

private:
    std::shared_ptr<Provider> inner_;
};

SessionError::Code code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const SessionError& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected SessionError";
    return SessionError::Code::NotFound;
}

}  // namespace

TEST(Engine, FirstEncounterCallMix) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    const auto out = s->step();
    const auto by = out.ledger.calls_by_purpose();
    EXPECT_EQ(by.at(CallPurpose::Dialogue), 7u);
    EXPECT_EQ(by.at(CallPurpose::EmrSummary), 1u);
    EXPECT_EQ(by.at(CallPurpose::LabMatch), 1u);
    EXPECT_EQ(by.at(CallPurpose::BeliefProbe), 1u);
    EXPECT_FALSE(by.contains(CallPurpose::EmrReview));
    EXPECT_EQ(out.transcript.terminal, TerminalReason::NaturalClose);
    ASSERT_EQ(out.transcript.messages.size(), 8u);
    EXPECT_EQ(out.transcript.messages.front().content, h.scenario->encounter(1).reason_for_visit);
    EXPECT_EQ(s->cursor(), 2);
    EXPECT_NE(transcript_text(out.transcript).find("Parent: "), std::string::npos);
}

TEST(Engine, InVisitLabPrecedesTheNoteAndIsVisibleToTheDoctor) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    s->step();
    const auto& recs = s->state().emr.records();
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].author_role, "lab");
    EXPECT_TRUE(recs[0].has_tag(kTagInVisit));
    EXPECT_EQ(recs[1].author_role, "pediatrician");
    bool doctor_saw_result = false;
    for (const auto& r : h.provider->requests()) {
        if (r.annotations.at("purpose") == "dialogue" && r.annotations.at("role") == "pediatrician") {
            doctor_saw_result |= joined(r).find("Negative for Group A Streptococcus") != std::string::npos;
        }
    }
    EXPECT_TRUE(doctor_saw_result);
}

TEST(Engine, ModeratorNeverSeesTheRecord) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    s->run_until(6);
    for (const auto& r : h.provider->requests()) {
        if (r.annotations.at("role") == "parent") {
            EXPECT_EQ(joined(r).find("### Record"), std::string::npos);
        }
    }
}

TEST(Engine, FailedStepLeavesStateUntouched) {
    TempDir dir;
    auto h = make_harness(dir.path(), 1, false);
    auto flaky = std::make_shared<FlakyProvider>(ScriptedProvider::from_file(h.scenario->config.scripted_responses_path), 12);
    auto g = std::make_shared<Gateway>(flaky, std::make_shared<ResponseCache>(dir / "c2"));
    DebugSession s(h.scenario, g, "flaky", h.options);
    s.step();
    const auto before_events = s.event_count();
    const auto before_records = s.state().emr.size();
    const auto before_messages = s.state().messages.size();
    EXPECT_THROW(s.step(), ProviderError);
    EXPECT_EQ(s.cursor(), 2);
    EXPECT_EQ(s.event_count(), before_events);
    EXPECT_EQ(s.state().emr.size(), before_records);
    EXPECT_EQ(s.state().messages.size(), before_messages);
    flaky->left_ = 1000;
    EXPECT_NO_THROW(s.step());
    EXPECT_EQ(s.cursor(), 3);
}

TEST(Engine, PruningCondensesOnlyOwnDialogue) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto tight = std::make_shared<Scenario>(*h.scenario);
    tight->config.history_token_budget = 300;
    h.scenario = tight;
    auto s = make_session(h);
    s->run_to_end();
    ASSERT_TRUE(s->ledger().calls_by_purpose().contains(CallPurpose::Pruning));
    const std::regex header("### Encounter ([0-9]+):");
    std::size_t pruned = 0;
    for (const auto& r : h.provider->requests()) {
        if (r.annotations.at("purpose") != "pruning") {
            continue;
        }
        ++pruned;
        const auto role = r.annotations.at("role");
        const auto text = joined(r);
        EXPECT_EQ(text.find("### Record"), std::string::npos);
        std::size_t headers = 0;
        for (std::sregex_iterator it(text.begin(), text.end(), header), end; it != end; ++it) {
            ++headers;
            const auto pos = std::stoi((*it)[1].str());
            const auto& spec = tight->encounters.at(static_cast<std::size_t>(pos - 1));
            EXPECT_TRUE(role == "parent" || spec.doctor_role == role) << role << " saw encounter " << pos;
        }
        EXPECT_GT(headers, 0u);
    }
    EXPECT_EQ(pruned, s->ledger().calls_by_purpose().at(CallPurpose::Pruning));
}

TEST(Session, RunUntilStopsAtBreakpointsAndTargets) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    s->set_breakpoints({4, 9});
    s->run_until();
    EXPECT_EQ(s->cursor(), 4);
    s->run_until();
    EXPECT_EQ(s->cursor(), 9);
    s->run_until(11);
    EXPECT_EQ(s->cursor(), 11);
    EXPECT_EQ(code_of([&] { s->run_until(3); }), SessionError::Code::InvalidTarget);
    EXPECT_EQ(code_of([&] { s->set_breakpoints({0}); }), SessionError::Code::InvalidTarget);
    s->run_to_end();
    EXPECT_TRUE(s->finished());
    EXPECT_EQ(code_of([&] { s->step(); }), SessionError::Code::EndOfScenario);
    std::size_t hits = 0;
    const auto events = s->events();
    for (std::size_t i = 0; i < events.size(); ++i) {
        EXPECT_EQ(events[i].index, i);
        hits += events[i].kind == EventKind::BreakpointHit;
    }
    EXPECT_EQ(hits, 2u);
}

TEST(Session, OnDemandProbeErrors) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    s->step();
    EXPECT_EQ(code_of([&] { s->probe("janitor", "stance"); }), SessionError::Code::UnknownAgent);
    EXPECT_EQ(code_of([&] { s->probe("pediatrician", "nope"); }), SessionError::Code::NotFound);
    const auto o = s->probe("neurologist", "sherlock");
    EXPECT_EQ(o.phase, ProbePhase::OnDemand);
    EXPECT_EQ(o.display_value(), "PANS");
}

TEST(Session, ControlValidation) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    s->run_until(3);
    EXPECT_EQ(code_of([&] { s->apply_controls({}); }), SessionError::Code::InvalidControl);
    ControlSet c;
    c.encounter_order = std::vector<int>{2, 1, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
    EXPECT_EQ(code_of([&] { s->apply_controls(c); }), SessionError::Code::InvalidControl);
    c.encounter_order = std::vector<int>{1, 2, 3};
    EXPECT_EQ(code_of([&] { s->apply_controls(c); }), SessionError::Code::InvalidControl);
    ControlSet v;
    v.voices["janitor"] = "x";
    EXPECT_EQ(code_of([&] { s->apply_controls(v); }), SessionError::Code::InvalidControl);
    ControlSet lab;
    lab.labs.push_back({"Rapid Antigen Test", "x", LabInjectionMode::OracleUpsert});
    lab.labs[0].key = "mri";
    EXPECT_NO_THROW(s->apply_controls(lab));
    EXPECT_EQ(code_of([&] { controls_from_json(nlohmann::json{{"bogus", 1}}); }), SessionError::Code::InvalidControl);
    EXPECT_EQ(code_of([&] { controls_from_json(nlohmann::json{{"labs", {{{"key", "a"}}}}}); }),
              SessionError::Code::InvalidControl);
}

TEST(Session, ControlsJsonRoundTrip) {
    const auto j = nlohmann::json::parse(R"({
      "priming": [{"agent": "pediatrician", "doc_id": 3, "text": "t"}],
      "exposure": {"rules": {"neurologist": "none"}, "hidden_record_ids": [2], "scope": "fork"},
      "encounter_order": [2, 1],
      "labs": [{"key": "aso", "result": "high", "mode": "emr-direct"}],
      "voices": {"neurologist": "loud"},
      "emr_prompt": "p"
    })");
    const auto c = controls_from_json(j);
    EXPECT_EQ(c.priming.at(0).doc_id, 3);
    EXPECT_EQ(c.exposure->rules.at("neurologist"), Visibility::None);
    EXPECT_EQ(c.labs.at(0).mode, LabInjectionMode::EmrDirect);
    EXPECT_EQ(controls_from_json(controls_json(c)).labs, c.labs);
    EXPECT_EQ(controls_json(controls_from_json(controls_json(c))), controls_json(c));
}

TEST(Session, ForkSharesThePrefixAndRejectsFutureForkPoints) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    s->run_until(5);
    EXPECT_EQ(code_of([&] { s->fork(6, {}, "x"); }), SessionError::Code::InvalidForkPoint);
    EXPECT_EQ(code_of([&] { s->fork(0, {}, "x"); }), SessionError::Code::InvalidForkPoint);
    auto child = s->fork(3, {}, "child");
    EXPECT_EQ(child->cursor(), 3);
    ASSERT_TRUE(child->parent());
    EXPECT_EQ(child->parent()->fork_at, 3);
    std::size_t records_before_fork = 0;
    for (const auto& r : s->state().emr.records()) {
        records_before_fork += r.sim_time.encounter < 3;
    }
    EXPECT_EQ(child->state().emr.size(), records_before_fork);
    child->run_until(5);
    EXPECT_EQ(behavioral_form(child->events()), behavioral_form(s->events()));
}

TEST(Session, ExactReplayIsIdenticalAndUsesTheCache) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h);
    s->set_breakpoints({4});
    s->run_until();
    s->probe("pediatrician", "sherlock");
    s->run_to_end();
    const auto calls = h.provider->requests().size();
    auto r = replay_exact(*s, "replay");
    EXPECT_TRUE(r.identical);
    EXPECT_EQ(r.first_divergence, s->events().size());
    EXPECT_EQ(h.provider->requests().size(), calls);
}

TEST(Session, ProbesDoNotLeakOntoTheRecord) {
    TempDir a_dir;
    TempDir b_dir;
    auto a = make_harness(a_dir.path());
    auto b = make_harness(b_dir.path());
    b.options.run_probes = false;
    auto sa = make_session(a);
    auto sb = make_session(b);
    sa->run_to_end();
    sb->run_to_end();
    for (std::size_t i = 0; i < sb->transcripts().size(); ++i) {
        EXPECT_EQ(transcript_text(sa->transcripts()[i]), transcript_text(sb->transcripts()[i]));
    }
    ASSERT_EQ(sa->state().emr.size(), sb->state().emr.size());
    for (std::size_t i = 0; i < sa->state().emr.size(); ++i) {
        EXPECT_EQ(sa->state().emr.records()[i].body, sb->state().emr.records()[i].body);
    }
    EXPECT_TRUE(sb->state().observations.empty());
}

TEST(Session, DiffBeliefsRequiresMatchingProbes) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto a = make_session(h, "a");
    a->run_until(4);
    auto b = a->fork(1, {}, "b");
    b->run_until(4);
    const auto rows = diff_beliefs(*a, *b);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.same_value());
        EXPECT_DOUBLE_EQ(*r.delta, 0.0);
    }
    ControlSet c;
    auto extra = h.scenario->config.belief_probes[1];
    extra.id = "sherlock-post";
    extra.schedule = ProbeSchedule::PostEncounter;
    c.probes.push_back(extra);
    auto d = a->fork(1, c, "d");
    EXPECT_EQ(code_of([&] { diff_beliefs(*a, *d); }), SessionError::Code::ProbeMismatch);
}

TEST(Store, SaveAndRestoreRebuildsTheSession) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h, "stored");
    s->set_breakpoints({3});
    s->run_until();
    ControlSet c;
    c.voices["neurologist"] = "Speak with authority and never hedge.";
    s->apply_controls(c);
    s->run_until(7);
    SessionStore store(dir / "store");
    SessionMeta meta;
    meta.session_id = "stored";
    meta.scenario_config = pandas_config();
    meta.scenario_id = 1;
    store.save(*s, meta);
    EXPECT_TRUE(store.exists("stored"));
    EXPECT_EQ(store.list(), (std::vector<std::string>{"stored"}));
    EXPECT_TRUE(std::filesystem::exists(store.emr_path("stored")));
    const auto restored = store.restore("stored", h.scenario, h.gateway, h.options);
    EXPECT_EQ(restored->cursor(), 7);
    const auto a = s->events();
    const auto b = restored->events();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(event_json(a[i]), event_json(b[i]));
    }
    EXPECT_EQ(restored->state().agents.at("neurologist").voice_text, c.voices["neurologist"]);
}

TEST(Store, ForkPersistsOnlyItsOwnEvents) {
    TempDir dir;
    auto h = make_harness(dir.path());
    auto s = make_session(h, "parent");
    s->run_until(4);
    SessionStore store(dir / "store");
    SessionMeta meta;
    meta.session_id = "parent";
    meta.scenario_config = pandas_config();
    meta.scenario_id = 1;
    store.save(*s, meta);
    auto child = s->fork(3, {}, "kid");
    child->run_until(5);
    SessionMeta cm = meta;
    cm.session_id = "kid";
    cm.parent = ParentRef{"parent", 3};
    std::size_t prefix = 0;
    for (const auto& e : s->events()) prefix += e.encounter < 3;
    cm.prefix_events = prefix;
    store.save(*child, cm);
    const auto own = read_text_file(store.session_dir("kid") / "events.ndjson");
    EXPECT_EQ(static_cast<std::size_t>(std::count(own.begin(), own.end(), '\n')), child->events().size() - prefix);
    const auto full = store.load_events("kid");
    EXPECT_EQ(behavioral_form(full), behavioral_form(child->events()));
}

TEST(Store, CsvQuoting) {
    EXPECT_EQ(csv_field("plain"), "plain");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(EventLog, NdjsonRoundTripAndDisplayTimeStripping) {
    EventLog log;
    log.append(EventKind::RunState, 1, {{"state", "running"}, {"display_time", "t1"}});
    log.append(EventKind::Message, 1, {{"content", "hi"}, {"nested", {{"display_time", "t2"}}}});
    const auto back = EventLog::from_ndjson(log.to_ndjson());
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(event_json(back.events()[1]), event_json(log.events()[1]));
    EXPECT_EQ(strip_display_times(log.events()[1].payload).dump(), R"({"content":"hi","nested":{}})");
    EXPECT_THROW(EventLog::parse_ndjson(log.to_ndjson(), 5), Error);
    EXPECT_EQ(parse_event_kind(to_string(EventKind::ControlApplied)), EventKind::ControlApplied);
}
