#include "support.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include "httplib.h"

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace whai;
using namespace whai::test;

namespace {

struct GoldenCase {
    std::string model;
    double temperature;
    int max_tokens;
    unsigned long long salt;
    std::vector<std::pair<std::string, std::string>> messages;
    std::string digest;
};

const std::vector<GoldenCase> kGolden = {
#include "oracles/cache_key_golden.inc"
};

CompletionRequest to_request(const GoldenCase& g) {
    CompletionRequest r;
    r.model_id = g.model;
    r.temperature = g.temperature;
    r.max_tokens = g.max_tokens;
    r.salt = g.salt;
    for (const auto& [role, content] : g.messages) {
        r.messages.push_back({parse_message_role(role), content});
    }
    return r;
}

CompletionRequest sample() {
    CompletionRequest r;
    r.model_id = "gpt-4o";
    r.max_tokens = 100;
    r.messages = {{MessageRole::System, "sys"}, {MessageRole::User, "hello"}};
    return r;
}

class CountingProvider : public Provider {
public:
    CompletionResponse complete(const CompletionRequest& r) override {
        ++calls;
        return {"reply to " + r.messages.back().content, {10, 5}, Provenance::Scripted};
    }
    Provenance kind() const override { return Provenance::Scripted; }
    std::atomic<int> calls{0};
};

}  // namespace

TEST(Util, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, StringHelpers) {
    EXPECT_EQ(trim("  a b \n"), "a b");
    EXPECT_EQ(to_lower("MiXeD"), "mixed");
    EXPECT_EQ(split("a,b,,c", ','), (std::vector<std::string>{"a", "b", "", "c"}));
    EXPECT_EQ(join({"a", "b"}, "-"), "a-b");
    EXPECT_TRUE(contains_icase("Spinal Tap", "spinal tap"));
    EXPECT_NE(find_word_icase("order an MRI today", "mri"), std::string::npos);
    EXPECT_EQ(find_word_icase("primrimary", "mri"), std::string::npos);
    EXPECT_EQ(find_word_icase("LPs", "LP"), std::string::npos);
    EXPECT_EQ(estimate_tokens(""), 0);
    EXPECT_EQ(estimate_tokens("abcde"), 2);
    EXPECT_EQ(render_template("{{a}} and {{b}} {{c}}", {{"a", "1"}, {"b", "2"}}), "1 and 2 {{c}}");
    EXPECT_EQ(format_fixed(0.7, 6), "0.700000");
    EXPECT_EQ(display_name("pediatrician"), "Pediatrician");
}

TEST(CacheKey, MatchesIndependentOracle) {
    for (const auto& g : kGolden) {
        EXPECT_EQ(cache_key(to_request(g)), g.digest) << g.model;
    }
}

TEST(CacheKey, IgnoresAnnotationsAndTimestamp) {
    auto a = sample();
    auto b = sample();
    b.annotations = {{"role", "parent"}, {"turn", "3"}};
    b.timestamp = "2030-01-01T00:00:00.000Z";
    EXPECT_EQ(cache_key(a), cache_key(b));
}

TEST(CacheKey, EveryKeyedFieldChangesTheKey) {
    const auto base = cache_key(sample());
    auto r = sample();
    r.model_id = "gpt-4o-mini";
    EXPECT_NE(cache_key(r), base);
    r = sample();
    r.temperature = 0.000001;
    EXPECT_NE(cache_key(r), base);
    r = sample();
    r.max_tokens = 101;
    EXPECT_NE(cache_key(r), base);
    r = sample();
    r.salt = 1;
    EXPECT_NE(cache_key(r), base);
    r = sample();
    std::swap(r.messages[0], r.messages[1]);
    EXPECT_NE(cache_key(r), base);
    r = sample();
    r.messages[1].role = MessageRole::Assistant;
    EXPECT_NE(cache_key(r), base);
    r = sample();
    r.messages.push_back({MessageRole::User, ""});
    EXPECT_NE(cache_key(r), base);
}

TEST(CacheKey, LengthPrefixPreventsConcatenationCollisions) {
    auto a = sample();
    a.messages = {{MessageRole::User, "ab"}, {MessageRole::User, "c"}};
    auto b = sample();
    b.messages = {{MessageRole::User, "a"}, {MessageRole::User, "bc"}};
    EXPECT_NE(cache_key(a), cache_key(b));
}

TEST(Cache, RoundTripAndClear) {
    TempDir dir;
    ResponseCache cache(dir.path());
    CacheEntry e{"k1", canonical_request_json(sample()), {"hi", {3, 1}, Provenance::Live}, iso8601_now()};
    EXPECT_FALSE(cache.contains("k1"));
    cache.put(e);
    ASSERT_TRUE(cache.contains("k1"));
    const auto got = cache.get("k1");
    ASSERT_TRUE(got);
    EXPECT_EQ(got->response.content, "hi");
    EXPECT_EQ(got->response.usage, (Usage{3, 1}));
    EXPECT_EQ(cache.size(), 1u);
    cache.clear();
    EXPECT_EQ(cache.size(), 0u);
}

TEST(Gateway, CacheHitSkipsProviderAndLedger) {
    TempDir dir;
    auto provider = std::make_shared<CountingProvider>();
    Gateway g(provider, std::make_shared<ResponseCache>(dir.path()), {{"gpt-4o", {1.0, 2.0}}});
    UsageLedger ledger;
    const CallInfo info{"pediatrician", 1, CallPurpose::Dialogue};
    const auto first = g.complete(sample(), {}, info, &ledger);
    EXPECT_EQ(first.provenance, Provenance::Scripted);
    const auto second = g.complete(sample(), {}, info, &ledger);
    EXPECT_EQ(second.provenance, Provenance::Cached);
    EXPECT_EQ(second.content, first.content);
    EXPECT_EQ(provider->calls, 1);
    EXPECT_EQ(ledger.calls(), 1u);
    EXPECT_DOUBLE_EQ(ledger.total_cost(), 10 / 1000.0 * 1.0 + 5 / 1000.0 * 2.0);
}

TEST(Gateway, NocacheAlwaysCallsAndWritesNothing) {
    TempDir dir;
    auto provider = std::make_shared<CountingProvider>();
    auto cache = std::make_shared<ResponseCache>(dir.path());
    Gateway g(provider, cache);
    CallOptions opts;
    opts.use_cache = false;
    g.complete(sample(), opts, {}, nullptr);
    g.complete(sample(), opts, {}, nullptr);
    EXPECT_EQ(provider->calls, 2);
    EXPECT_EQ(cache->size(), 0u);
}

TEST(Gateway, CacheOnlyMissRaises) {
    TempDir dir;
    auto provider = std::make_shared<CountingProvider>();
    Gateway g(provider, std::make_shared<ResponseCache>(dir.path()));
    CallOptions opts;
    opts.cache_only = true;
    EXPECT_THROW(g.complete(sample(), opts, {}, nullptr), CacheMissError);
    EXPECT_EQ(provider->calls, 0);
}

TEST(Gateway, ConcurrentCallersShareTheCache) {
    TempDir dir;
    auto provider = std::make_shared<CountingProvider>();
    Gateway g(provider, std::make_shared<ResponseCache>(dir.path()));
    g.complete(sample(), {}, {}, nullptr);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] {
            for (int k = 0; k < 20; ++k) {
                EXPECT_EQ(g.complete(sample(), {}, {}, nullptr).provenance, Provenance::Cached);
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    EXPECT_EQ(provider->calls, 1);
}

TEST(Ledger, CostMatchesPriceTable) {
    const std::map<std::string, PriceEntry> prices{{"gpt-4o", {0.0025, 0.01}}};
    EXPECT_DOUBLE_EQ(cost_for(prices, "gpt-4o", {2000, 500}), 0.005 + 0.005);
    EXPECT_DOUBLE_EQ(cost_for(prices, "unknown", {2000, 500}), 0.0);
    UsageLedger l;
    l.record({"a", 1, CallPurpose::Dialogue, 10, 2, 0.5});
    l.record({"b", 2, CallPurpose::BeliefProbe, 5, 1, 0.25});
    EXPECT_EQ(l.totals(), (Usage{15, 3}));
    EXPECT_DOUBLE_EQ(l.total_cost(), 0.75);
    EXPECT_EQ(l.calls_by_purpose().at(CallPurpose::BeliefProbe), 1u);
}

TEST(Scripted, FirstMatchingRuleWinsAndMissRaises) {
    ScriptRule a;
    a.when = {{"purpose", "dialogue"}, {"role", "parent"}};
    a.respond = "parent says {{turn}}";
    ScriptRule b;
    b.when = {{"purpose", "dialogue"}};
    b.respond = "anyone";
    ScriptedProvider p({a, b});
    auto r = sample();
    r.annotations = {{"purpose", "dialogue"}, {"role", "parent"}, {"turn", "2"}};
    EXPECT_EQ(p.complete(r).content, "parent says 2");
    r.annotations["role"] = "neurologist";
    EXPECT_EQ(p.complete(r).content, "anyone");
    r.annotations["purpose"] = "pruning";
    EXPECT_THROW(p.complete(r), ScriptMissError);
}

TEST(Scripted, ContextAndRegexConditions) {
    ScriptRule a;
    a.context_contains = {"needle"};
    a.context_lacks = {"poison"};
    a.last_user_matches.emplace("^ask\\b", std::regex::ECMAScript | std::regex::icase);
    a.respond = "matched";
    ScriptedProvider p({a});
    auto r = sample();
    r.messages = {{MessageRole::System, "has needle"}, {MessageRole::User, "ASK me"}};
    EXPECT_EQ(p.complete(r).content, "matched");
    r.messages[0].content = "has needle and poison";
    EXPECT_THROW(p.complete(r), ScriptMissError);
}

TEST(Scripted, ScoreRuleIsDeterministicAndSaltSensitive) {
    ScoreRule s;
    s.base = 5;
    s.add = {{"marker", 2}};
    s.jitter = 1;
    auto r = sample();
    r.messages.push_back({MessageRole::User, "marker"});
    const int v = s.evaluate(r);
    EXPECT_EQ(v, s.evaluate(r));
    EXPECT_GE(v, 6);
    EXPECT_LE(v, 8);
    std::set<int> seen;
    for (std::uint64_t salt = 0; salt < 40; ++salt) {
        r.salt = salt;
        seen.insert(s.evaluate(r));
    }
    EXPECT_EQ(seen, (std::set<int>{6, 7, 8}));
    s.bands = {{3, "low"}, {10, "high"}};
    EXPECT_EQ(s.stance_for(2), "low");
    EXPECT_EQ(s.stance_for(7), "high");
}

TEST(Scripted, LoaderReportsLineNumbers) {
    TempDir dir;
    write_text_file(dir / "bad.yaml", "rules:\n  - when: {purpose: dialogue}\n    respnd: x\n");
    try {
        ScriptedProvider::from_file(dir / "bad.yaml");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_NE(std::string(e.what()).find("respnd"), std::string::npos);
    }
}

TEST(Scripted, UsageIsDeterministic) {
    const auto r = sample();
    EXPECT_EQ(scripted_usage(r, "abcd"), (Usage{estimate_tokens("sys") + 3 + estimate_tokens("hello") + 3, 1}));
}

TEST(Live, RequestBodyAndResponseParsing) {
    auto r = sample();
    r.temperature = 0.7;
    const auto body = chat_request_body(r);
    EXPECT_EQ(body["model"], "gpt-4o");
    EXPECT_EQ(body["max_tokens"], 100);
    EXPECT_EQ(body["messages"][1]["role"], "user");
    const auto resp = parse_chat_response(
        R"({"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}})");
    EXPECT_EQ(resp.content, "hi");
    EXPECT_EQ(resp.usage, (Usage{7, 2}));
    EXPECT_THROW(parse_chat_response("not json"), ProviderError);
    EXPECT_THROW(parse_chat_response(R"({"choices":[]})"), ProviderError);
}

TEST(Live, RetriesServerErrorsAndFailsFastOnClientErrors) {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::atomic<int> mode{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++hits;
        if (mode == 1) {
            res.status = 400;
            res.set_content(R"({"error":"bad"})", "application/json");
            return;
        }
        if (n < 3) {
            res.status = n == 1 ? 503 : 429;
            return;
        }
        EXPECT_EQ(req.get_header_value("Authorization"), "Bearer secret");
        res.set_content(R"({"choices":[{"message":{"content":"ok"}}],"usage":{"prompt_tokens":1,"completion_tokens":1}})",
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    LiveProviderConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    cfg.api_key = "secret";
    cfg.initial_backoff = std::chrono::milliseconds(1);
    cfg.max_attempts = 3;
    LiveProvider live(cfg);
    EXPECT_EQ(live.complete(sample()).content, "ok");
    EXPECT_EQ(live.attempts(), 3);

    mode = 1;
    try {
        live.complete(sample());
        FAIL() << "expected ProviderError";
    } catch (const ProviderError& e) {
        EXPECT_FALSE(e.retryable());
        EXPECT_EQ(e.status(), 400);
    }
    EXPECT_EQ(live.attempts(), 4);
    server.stop();
    t.join();
}

TEST(Prices, LoadAndEnvOverride) {
    TempDir dir;
    write_text_file(dir / "prices.yaml", "gpt-4o:\n  prompt_per_1k: 1.5\n  completion_per_1k: 3\n");
    const auto table = load_price_table(dir / "prices.yaml");
    EXPECT_DOUBLE_EQ(table.at("gpt-4o").prompt_per_1k, 1.5);
    setenv("WHAI_PRICE_TABLE", (dir / "prices.yaml").c_str(), 1);
    const auto merged = prices_with_env_override({{"gpt-4o", {0.1, 0.2}}, {"other", {1, 1}}});
    unsetenv("WHAI_PRICE_TABLE");
    EXPECT_DOUBLE_EQ(merged.at("gpt-4o").completion_per_1k, 3.0);
    EXPECT_DOUBLE_EQ(merged.at("other").prompt_per_1k, 1.0);
}
