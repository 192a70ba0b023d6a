#include "support.hpp"

#include "whai/belief.hpp"
#include "whai/emr.hpp"
#include "whai/error.hpp"
#include "whai/lab_oracle.hpp"
#include "whai/util.hpp"

#include <gtest/gtest.h>

using namespace whai;
using namespace whai::test;

namespace {

EmrRecord rec(const Role& author, int enc, int step, std::string body = "Assessment: x") {
    EmrRecord r;
    r.author_role = author;
    r.encounter_id = enc;
    r.sim_time = {enc, step};
    r.body = std::move(body);
    return r;
}

class FailingMatcher : public LabMatcher {
public:
    std::vector<LabMatch> match(const std::string&, const std::map<std::string, std::string>&) override {
        throw ProviderError("down", true);
    }
    std::string name() const override { return "failing"; }
};

}  // namespace

TEST(Scenario, LoadsFixtureScenario) {
    const auto s = load_pandas(1);
    EXPECT_EQ(s->config.scenario_id, 1);
    EXPECT_EQ(s->config.model_id, "gpt-4o");
    EXPECT_EQ(s->config.moderator_role, "parent");
    ASSERT_EQ(s->encounters.size(), 15u);
    EXPECT_EQ(s->encounters.front().doctor_role, "pediatrician");
    EXPECT_EQ(s->encounters.front().in_visit_labs.size(), 1u);
    EXPECT_EQ(s->config.records_policy.class_for("parent"), Visibility::None);
    EXPECT_EQ(s->config.records_policy.class_for("neurologist"), Visibility::FullRecord);
    EXPECT_EQ(s->hidden_labs.entries.size(), 3u);
    EXPECT_TRUE(s->has_agent("rheumatologist"));
    EXPECT_FALSE(s->global_document.empty());
    EXPECT_EQ(s->specialist_roles(),
              (std::vector<Role>{"neurologist", "pediatrician", "psychiatrist", "rheumatologist"}));
    EXPECT_EQ(s->config.belief_probes.size(), 4u);
    EXPECT_EQ(s->config.belief_probes[0].categories,
              (std::vector<std::string>{"rejects", "skeptical", "neutral", "believes"}));
}

TEST(Scenario, DefaultIdAndSecondScenario) {
    EXPECT_EQ(load_scenario(pandas_config()).scenario_id, 1);
    const auto two = load_scenario(pandas_config(), 2);
    EXPECT_EQ(two.lab_matcher, LabMatcherKind::KeywordTable);
    EXPECT_DOUBLE_EQ(two.temperature, 0.7);
    EXPECT_THROW(load_scenario(pandas_config(), 99), ConfigError);
}

TEST(Scenario, UnknownKeyReportsLocation) {
    TempDir dir;
    write_text_file(dir / "config.yaml", "default: 1\nscenarios:\n  - id: 1\n    modle: gpt-4o\n");
    try {
        load_scenario(dir / "config.yaml");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 4);
        EXPECT_NE(std::string(e.what()).find("modle"), std::string::npos);
    }
}

TEST(Scenario, DumpRoundTrips) {
    const auto a = load_scenario(pandas_config(), 1);
    TempDir dir;
    write_text_file(dir / "one.yaml", dump_scenario(a));
    const auto b = load_scenario(dir / "one.yaml");
    EXPECT_EQ(a, b);
}

TEST(Scenario, EncounterLoaderRejectsUnknownRole) {
    const auto path = scenario_root() / "pandas" / "encounters" / "scenario1.yaml";
    EXPECT_THROW(load_encounters(path, [](const Role& r) { return r != "rheumatologist"; }), ConfigError);
    EXPECT_EQ(load_encounters(path).size(), 15u);
}

TEST(Emr, SectionsParseWithEmphasisAndCase) {
    const auto s = parse_sections("preamble\n**Subjective:** a\nFINDINGS: b\n__Labs__: c\n## Assessment\nd\nPlan: e\nf");
    EXPECT_EQ(s.subjective, "a");
    EXPECT_EQ(s.findings, "b");
    EXPECT_EQ(s.labs, "c");
    EXPECT_EQ(trim(s.plan), "e\nf");
    EXPECT_NE(s.assessment.find("d"), std::string::npos);
    EXPECT_EQ(parse_sections(format_sections(s)), s);
}

TEST(Emr, VisibilityFollowsTimePolicyAndOverlay) {
    EmrStore store;
    const auto a = store.append(rec("pediatrician", 1, 3));
    const auto b = store.append(rec("neurologist", 2, 3));
    store.append(rec("rheumatologist", 3, 3));
    RecordsPolicy policy;
    policy.rules["psychiatrist"] = Visibility::OwnAuthoredOnly;
    policy.rules["parent"] = Visibility::None;
    VisibilityOverlay none;

    EXPECT_EQ(store.visible("neurologist", {2, 0}, policy, none).size(), 1u);
    EXPECT_EQ(store.visible("neurologist", {2, kLastStep}, policy, none).size(), 2u);
    EXPECT_TRUE(store.visible("psychiatrist", {9, 0}, policy, none).empty());
    EXPECT_TRUE(store.visible("parent", {9, 0}, policy, none).empty());

    VisibilityOverlay overlay;
    overlay.hidden_for_role["neurologist"] = {a};
    const auto seen = store.visible("neurologist", {9, 0}, policy, overlay);
    ASSERT_EQ(seen.size(), 2u);
    EXPECT_EQ(seen.front().record_id, b);
    EXPECT_EQ(store.visible("pediatrician", {9, 0}, policy, overlay).size(), 3u);

    policy.overrides.push_back({b, "psychiatrist", true});
    EXPECT_EQ(store.visible("psychiatrist", {9, 0}, policy, none).size(), 1u);
}

TEST(Emr, AppendIsMonotonic) {
    EmrStore store;
    store.append(rec("a", 2, 1));
    EXPECT_THROW(store.append(rec("a", 1, 1)), Error);
    auto r = rec("lab", 1, 0);
    r.tags = {kTagCounterfactual};
    EXPECT_NO_THROW(store.append(r));
    EXPECT_EQ(store.size(), 2u);
}

TEST(Emr, RenderIsByteStable) {
    EXPECT_EQ(render_history({}), kNoPriorRecords);
    EmrStore store;
    store.append(rec("pediatrician", 1, 3, "Plan: rest"));
    auto lab = rec("lab", 1, 4, "Labs: ok");
    lab.tags = {kTagLabRelease};
    lab.display_time = "ignored";
    store.append(lab);
    store.append(rec("neurologist", 2, 3, "Plan: observe\n"));
    const std::string expected =
        "## Encounter 1\n### Record 1 by Pediatrician\nPlan: rest\n### Record 2 by Lab [lab-release]\nLabs: ok\n"
        "\n## Encounter 2\n### Record 3 by Neurologist\nPlan: observe\n";
    EXPECT_EQ(render_history(store.records()), expected);
}

TEST(LabOracle, KeywordMatcherUsesWholeWords) {
    KeywordMatcher m({{"mri", {"MRI", "magnetic resonance"}}, {"lp", {"LP", "lumbar puncture"}}});
    const std::map<std::string, std::string> held{{"mri", "r1"}, {"lp", "r2"}};
    auto got = m.match("Plan: order an mri of the brain.", held);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].key, "mri");
    EXPECT_TRUE(m.match("Plan: help with LPs and primrose", held).empty());
    EXPECT_EQ(m.match("Plan: Lumbar Puncture", held).at(0).key, "lp");
}

TEST(LabOracle, ReplyParsing) {
    EXPECT_TRUE(LlmLabMatcher::parse_reply("NONE").empty());
    EXPECT_EQ(LlmLabMatcher::parse_reply("**mri**, lp.\n- cbc"), (std::vector<std::string>{"mri", "lp", "cbc"}));
}

TEST(LabOracle, ReleaseMarksAndIsIdempotent) {
    HiddenLabSet h;
    h.entries = {{"mri", "normal"}, {"cbc", "eos 7%"}};
    KeywordMatcher m({{"mri", {"MRI"}}, {"cbc", {"CBC"}}});
    auto r = release_for_orders("Plan: MRI brain", h, m, {5, 4});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].lab_key, "mri");
    EXPECT_EQ(r[0].result_text, "normal");
    EXPECT_EQ(r[0].released_at, (LogicalTime{5, 4}));
    EXPECT_TRUE(h.is_released("mri"));
    EXPECT_TRUE(release_for_orders("Plan: MRI again", h, m, {6, 4}).empty());
    EXPECT_EQ(h.unreleased().size(), 1u);
    EXPECT_NE(release_record_body(r[0]).find("normal"), std::string::npos);
}

TEST(LabOracle, MatcherFailureLeavesSetUntouched) {
    HiddenLabSet h;
    h.entries = {{"mri", "normal"}};
    const auto before = h;
    FailingMatcher m;
    EXPECT_THROW(release_for_orders("Plan: MRI", h, m, {1, 4}), ProviderError);
    EXPECT_EQ(h, before);
}

TEST(LabOracle, LlmRequestListsOnlyHeldKeys) {
    LlmLabMatcher::Context ctx;
    ctx.lab_persona = "You are the lab.";
    const auto req = LlmLabMatcher::build_request(ctx, "Plan: MRI", {{"mri", "normal"}});
    const auto text = joined(req);
    EXPECT_NE(text.find("Plan: MRI"), std::string::npos);
    EXPECT_NE(text.find("- mri: normal"), std::string::npos);
    EXPECT_EQ(req.annotations.at("purpose"), "lab-match");
}

TEST(LabOracle, InVisitLabsRelease) {
    const auto s = load_pandas(1);
    const auto r = force_in_visit_labs(s->encounter(1), {1, 1});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].matcher, kMatcherInVisit);
    EXPECT_NE(r[0].result_text.find("Negative"), std::string::npos);
}

TEST(Belief, CategoricalScoredAndCaseInsensitive) {
    auto probe = load_pandas(1)->config.belief_probes[0];
    const auto o = parse_belief(probe, "**Belief:** Skeptical\nJustification: x");
    ASSERT_FALSE(o.parse_failed);
    EXPECT_EQ(*o.category, "skeptical");
    EXPECT_DOUBLE_EQ(*o.score, 3.0);
    const auto bad = parse_belief(probe, "I cannot say.");
    EXPECT_TRUE(bad.parse_failed);
    EXPECT_FALSE(bad.score);
    EXPECT_EQ(bad.display_value(), "");
}

TEST(Belief, NumericAndListKinds) {
    const auto s = load_pandas(1);
    const BeliefProbe* numeric = nullptr;
    const BeliefProbe* list = nullptr;
    for (const auto& p : s->config.belief_probes) {
        if (p.kind == ResponseKind::Numeric) numeric = &p;
        if (p.kind == ResponseKind::FreeformList) list = &p;
    }
    ASSERT_TRUE(numeric && list);
    auto n = parse_belief(*numeric, "Score: 7");
    EXPECT_DOUBLE_EQ(*n.number, 7.0);
    EXPECT_TRUE(parse_belief(*numeric, "Score: 42").parse_failed);
    auto l = parse_belief(*list, "Top diagnoses:\n1. PANS\n2. OCD\nJustification: x");
    EXPECT_EQ(l.ranked, (std::vector<std::string>{"PANS", "OCD"}));
    EXPECT_EQ(l.display_value(), "PANS");
}

TEST(Belief, RankedListSplitting) {
    EXPECT_EQ(split_ranked_list("1. A 2. B 3. C"), (std::vector<std::string>{"A", "B", "C"}));
    EXPECT_EQ(split_ranked_list("A; B"), (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(split_ranked_list("A\nB\n"), (std::vector<std::string>{"A", "B"}));
}

TEST(Belief, ScoreTables) {
    EXPECT_DOUBLE_EQ(default_stance_scores().at("believes"), 8.0);
    EXPECT_THROW(validate_score_table({"a", "b"}, {{"a", 2}, {"b", 1}}), Error);
    EXPECT_THROW(validate_score_table({"a", "b"}, {{"a", 1}}), Error);
    EXPECT_THROW(map_stance_to_score("maybe", default_stance_scores()), Error);
    BeliefProbe p;
    p.id = "x";
    p.prompt_template = "?";
    p.parse_expr = "(yes|no)";
    compile_probe(p);
    EXPECT_EQ(p.categories, (std::vector<std::string>{"yes", "no"}));
    EXPECT_FALSE(score_table_for(p));
    BeliefProbe bad = p;
    bad.parse_expr = "(unclosed";
    EXPECT_THROW(compile_probe(bad), Error);
}
