#include "support.hpp"

#include "whai/error.hpp"
#include "whai/service.hpp"

#include "httplib.h"

#include <gtest/gtest.h>

#include <thread>

using namespace whai;
using namespace whai::test;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        ServiceOptions o;
        o.root = dir.path() / "store";
        o.cache_dir = dir.path() / "cache";
        o.default_scenario = pandas_config();
        service = std::make_unique<Service>(o);
        port = service->bind("127.0.0.1", 0);
        ASSERT_GT(port, 0);
        thread = std::thread([this] { service->run(); });
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        client->set_read_timeout(std::chrono::seconds(30));
        for (int i = 0; i < 100; ++i) {
            if (auto r = client->Get("/api/v1/health"); r && r->status == 200) {
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        FAIL() << "service did not come up";
    }

    void TearDown() override {
        service->stop();
        thread.join();
    }

    std::pair<int, json> post(const std::string& path, const json& body) {
        auto r = client->Post(path, body.dump(), "application/json");
        if (!r) {
            return {0, {}};
        }
        return {r->status, r->body.empty() ? json() : json::parse(r->body)};
    }

    std::pair<int, json> get(const std::string& path) {
        auto r = client->Get(path);
        if (!r) {
            return {0, {}};
        }
        return {r->status, json::parse(r->body)};
    }

    void create(const std::string& id) {
        const auto [status, body] = post("/api/v1/sessions", {{"session_id", id}, {"scenario_id", 1}});
        ASSERT_EQ(status, 201) << body.dump();
    }

    TempDir dir;
    std::unique_ptr<Service> service;
    std::unique_ptr<httplib::Client> client;
    std::thread thread;
    int port = 0;
};

}  // namespace

TEST(ServiceStatus, ExceptionMapping) {
    EXPECT_EQ(http_status_for(SessionError(SessionError::Code::NotFound, "")), 404);
    EXPECT_EQ(http_status_for(SessionError(SessionError::Code::Busy, "")), 409);
    EXPECT_EQ(http_status_for(SessionError(SessionError::Code::EndOfScenario, "")), 409);
    EXPECT_EQ(http_status_for(SessionError(SessionError::Code::InvalidControl, "")), 422);
    EXPECT_EQ(http_status_for(SessionError(SessionError::Code::ProbeMismatch, "")), 422);
    EXPECT_EQ(http_status_for(ProviderError("x", true)), 502);
    EXPECT_EQ(http_status_for(CacheMissError("k")), 409);
    EXPECT_EQ(http_status_for(std::runtime_error("x")), 500);
}

TEST_F(ServiceTest, CreateStepAndInspect) {
    create("alpha");
    auto [st, summary] = get("/api/v1/sessions/alpha");
    EXPECT_EQ(st, 200);
    EXPECT_EQ(summary["cursor"], 1);
    EXPECT_EQ(summary["total"], 15);
    EXPECT_EQ(summary["next_encounter_id"], 1);

    auto [s2, stepped] = post("/api/v1/sessions/alpha/step", json::object());
    EXPECT_EQ(s2, 200);
    EXPECT_EQ(stepped["session"]["cursor"], 2);
    EXPECT_EQ(stepped["stepped"][0]["terminal"], "natural-close");
    EXPECT_EQ(stepped["session"]["ledger"]["calls"], 10);

    auto [s3, emr] = get("/api/v1/sessions/alpha/emr?role=neurologist");
    EXPECT_EQ(s3, 200);
    EXPECT_EQ(emr["records"].size(), 2u);
    auto [s4, parent_view] = get("/api/v1/sessions/alpha/emr?role=parent");
    EXPECT_EQ(s4, 200);
    EXPECT_TRUE(parent_view["records"].empty());
    EXPECT_EQ(get("/api/v1/sessions/alpha/emr?role=janitor").first, 422);

    auto [s5, beliefs] = get("/api/v1/sessions/alpha/beliefs");
    EXPECT_EQ(s5, 200);
    EXPECT_EQ(beliefs["observations"][0]["parsed"], "skeptical");
    auto csv = client->Get("/api/v1/sessions/alpha/beliefs?format=csv");
    ASSERT_TRUE(csv);
    EXPECT_EQ(csv->body.rfind("agent,encounter_id", 0), 0u);

    EXPECT_EQ(get("/api/v1/sessions/alpha/transcript").second["transcripts"].size(), 1u);
    EXPECT_EQ(get("/api/v1/sessions/alpha/scenario").first, 200);
    EXPECT_EQ(get("/api/v1/sessions/alpha/ledger").first, 200);
    auto [s6, list] = get("/api/v1/sessions");
    EXPECT_EQ(s6, 200);
    EXPECT_NE(list.dump().find("alpha"), std::string::npos);
}

TEST_F(ServiceTest, ErrorStatuses) {
    EXPECT_EQ(get("/api/v1/sessions/ghost").first, 404);
    EXPECT_EQ(post("/api/v1/sessions/ghost/step", json::object()).first, 404);
    create("beta");
    EXPECT_EQ(post("/api/v1/sessions", {{"session_id", "beta"}}).first, 409);
    EXPECT_EQ(post("/api/v1/sessions", {{"session_id", "../etc"}}).first, 422);
    auto bad = client->Post("/api/v1/sessions/beta/controls", "{not json", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    EXPECT_EQ(post("/api/v1/sessions/beta/controls", {{"controls", {{"bogus", 1}}}}).first, 422);
    EXPECT_EQ(post("/api/v1/sessions/beta/run-until", {{"target", 99}}).first, 422);
    EXPECT_EQ(post("/api/v1/sessions/beta/fork", {{"at", 5}}).first, 422);
    EXPECT_EQ(post("/api/v1/sessions/beta/probe", {{"agent", "pediatrician"}, {"probe", "nope"}}).first, 404);

    auto session = service->find("beta");
    ASSERT_TRUE(session);
    {
        std::lock_guard hold(session->command_mutex());
        EXPECT_EQ(post("/api/v1/sessions/beta/step", json::object()).first, 409);
    }
    EXPECT_EQ(post("/api/v1/sessions/beta/run-until", {{"to_end", true}}).first, 200);
    EXPECT_EQ(post("/api/v1/sessions/beta/step", json::object()).first, 409);
}

TEST_F(ServiceTest, ProbeForkReplayAndDiff) {
    create("gamma");
    ASSERT_EQ(post("/api/v1/sessions/gamma/run-until", {{"target", 4}}).first, 200);
    auto [sp, obs] = post("/api/v1/sessions/gamma/probe", {{"agent", "neurologist"}, {"probe", "sherlock"}});
    EXPECT_EQ(sp, 200);
    EXPECT_EQ(obs["parsed"][0], "PANS");

    json controls = {{"voices", {{"neurologist", "Speak with authority and never hedge."}}}};
    auto [sf, fork] = post("/api/v1/sessions/gamma/fork", {{"at", 3}, {"controls", controls}, {"session_id", "gamma-f"}});
    ASSERT_EQ(sf, 201) << fork.dump();
    EXPECT_EQ(fork["parent"]["session_id"], "gamma");
    EXPECT_EQ(fork["cursor"], 3);
    EXPECT_EQ(post("/api/v1/sessions/gamma-f/run-until", {{"target", 6}}).first, 200);

    auto [sr, replay] = post("/api/v1/sessions/gamma/replay", {{"mode", "exact"}, {"session_id", "gamma-r"}});
    ASSERT_EQ(sr, 201) << replay.dump();
    EXPECT_TRUE(replay["identical"].get<bool>());

    auto [sd, diff] = get("/api/v1/sessions/gamma/diff/gamma-r");
    EXPECT_EQ(sd, 200);
    EXPECT_FALSE(diff["rows"].empty());
}

TEST_F(ServiceTest, EventStreamReplaysAndResumes) {
    create("delta");
    ASSERT_EQ(post("/api/v1/sessions/delta/step", json::object()).first, 200);
    const auto count = get("/api/v1/sessions/delta").second["event_count"].get<std::size_t>();

    auto all = client->Get("/api/v1/sessions/delta/events?follow=false");
    ASSERT_TRUE(all);
    EXPECT_EQ(all->status, 200);
    EXPECT_EQ(all->get_header_value("Content-Type"), "text/event-stream");
    std::size_t n = 0;
    for (std::size_t pos = 0; (pos = all->body.find("\nevent: ", pos)) != std::string::npos; ++pos) {
        ++n;
    }
    EXPECT_EQ(n, count);
    EXPECT_EQ(all->body.rfind("id: 0\nevent: run-state\ndata: ", 0), 0u);
    const auto first_data = all->body.substr(all->body.find("data: ") + 6);
    const auto j = json::parse(first_data.substr(0, first_data.find('\n')));
    EXPECT_EQ(j["session_id"], "delta");
    EXPECT_EQ(j["index"], 0);

    httplib::Headers h{{"Last-Event-ID", std::to_string(count - 2)}};
    auto tail = client->Get("/api/v1/sessions/delta/events?follow=false", h);
    ASSERT_TRUE(tail);
    EXPECT_EQ(tail->body.rfind("id: " + std::to_string(count - 1) + "\n", 0), 0u);

    std::string live;
    std::thread reader([&] {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(std::chrono::seconds(10));
        c.Get("/api/v1/sessions/delta/events?from=" + std::to_string(count),
              [&](const char* data, std::size_t len) {
                  live.append(data, len);
                  return live.find("\"state\":\"paused\"") == std::string::npos;
              });
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    ASSERT_EQ(post("/api/v1/sessions/delta/step", json::object()).first, 200);
    reader.join();
    EXPECT_EQ(live.find("id: " + std::to_string(count) + "\n"), live.find("id: "));
    EXPECT_NE(live.find("event: emr-record"), std::string::npos);
}

TEST_F(ServiceTest, SessionsSurviveARestartViaTheStore) {
    create("eps");
    ASSERT_EQ(post("/api/v1/sessions/eps/run-until", {{"target", 3}}).first, 200);
    ServiceOptions o;
    o.root = dir.path() / "store";
    o.cache_dir = dir.path() / "cache";
    Service fresh(o);
    const auto s = fresh.find("eps");
    ASSERT_TRUE(s);
    EXPECT_EQ(s->cursor(), 3);
    EXPECT_FALSE(fresh.find("missing"));
}

TEST_F(ServiceTest, ExperimentLifecycle) {
    auto [st, started] = post("/api/v1/experiments", {{"experiment_id", "oe"},
                                                      {"scenario_id", 2},
                                                      {"roles", {"neurologist", "rheumatologist"}},
                                                      {"replicates", 1},
                                                      {"block_sizes", {1, 1}},
                                                      {"closing_encounters", 1}});
    ASSERT_EQ(st, 202) << started.dump();
    json status;
    for (int i = 0; i < 200; ++i) {
        status = get("/api/v1/experiments/oe").second;
        if (status["status"] != "running" && status["status"] != "queued") {
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
    ASSERT_EQ(status["status"], "completed") << status.dump();
    EXPECT_EQ(status["completed_runs"], 2);
    auto [sr, results] = get("/api/v1/experiments/oe/results");
    EXPECT_EQ(sr, 200);
    EXPECT_EQ(results["analyses"].size(), 4u);
    auto csv = client->Get("/api/v1/experiments/oe/results?format=csv");
    ASSERT_TRUE(csv);
    EXPECT_EQ(csv->body.rfind("run_id,series", 0), 0u);
    EXPECT_EQ(get("/api/v1/experiments/none").first, 404);
}
