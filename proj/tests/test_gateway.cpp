#include <doctest.h>

#include <atomic>
#include <cstdio>
#include <thread>
#include <unistd.h>

#include <httplib.h>

#include "personaforge/errors.hpp"
#include "personaforge/gateway.hpp"
#include "personaforge/text.hpp"

using namespace personaforge;

namespace {

ChatRequest make_request(RoleTag tag, const std::string& user, const std::string& system = "") {
    ChatRequest req;
    req.role_tag = tag;
    if (!system.empty()) req.messages.push_back({Role::system, system});
    req.messages.push_back({Role::user, user});
    return req;
}

std::string temp_path(const std::string& name) {
    return std::string("/tmp/personaforge_test_") + name + "_" + std::to_string(::getpid());
}

}  // namespace

TEST_CASE("request validation enforces type invariants") {
    ChatRequest req;
    CHECK_THROWS_AS(req.validate(), Error);  // empty messages

    req = make_request(RoleTag::compiler, "hello");
    CHECK_NOTHROW(req.validate());

    req.temperature = 2.5;
    CHECK_THROWS_AS(req.validate(), Error);
    req.temperature = 0.7;

    req.messages.push_back({Role::system, "late system"});
    CHECK_THROWS_AS(req.validate(), Error);

    req = make_request(RoleTag::compiler, "  ");
    CHECK_THROWS_AS(req.validate(), Error);
}

TEST_CASE("scripted backend returns registered text verbatim") {
    auto backend = std::make_shared<ScriptedBackend>();
    ChatRequest req = make_request(RoleTag::compiler, "compile this");
    backend->register_exact(req, "the exact registered answer");

    Gateway gateway(backend);
    ChatResponse resp = gateway.complete(req, Stage::persona_formulation);
    CHECK(resp.content == "the exact registered answer");

    // a different request falls back to the role simulator
    ChatRequest other = make_request(RoleTag::compiler, "- tone=formal");
    CHECK(gateway.complete(other, Stage::persona_formulation).content ==
          "You are simulating a user with: tone=formal");
}

TEST_CASE("scripted determinism: repeated calls are byte-identical") {
    auto backend = std::make_shared<ScriptedBackend>();
    Gateway gateway(backend);
    ChatRequest req = make_request(RoleTag::assistant_agent, "explain the tides");
    req.seed = 1234;
    std::string first = gateway.complete(req, Stage::interaction_generation).content;
    bool all_same = true;
    for (int i = 0; i < 1000; ++i) {
        all_same = all_same &&
                   gateway.complete(req, Stage::interaction_generation).content == first;
    }
    CHECK(all_same);
}

TEST_CASE("ledger accumulates usage and conserves the total") {
    TokenLedger ledger;
    ledger.add(Stage::interaction_generation, {100, 50});
    ledger.add(Stage::query_generation, {30, 20});
    CHECK(ledger.grand_total() == doctest::Approx(200.0));
    CHECK(ledger.stage_total(Stage::interaction_generation) == doctest::Approx(150.0));
}

TEST_CASE("ledger grand total equals the sum of per-call usage") {
    auto backend = std::make_shared<ScriptedBackend>();
    Gateway gateway(backend);
    int64_t expected = 0;
    for (int i = 0; i < 25; ++i) {
        ChatRequest req = make_request(RoleTag::assistant_agent, "query " + std::to_string(i));
        ChatResponse resp = gateway.complete(req, Stage::interaction_generation);
        expected += resp.usage.prompt_tokens + resp.usage.completion_tokens;
    }
    CHECK(gateway.ledger().grand_total() == doctest::Approx(static_cast<double>(expected)));
}

TEST_CASE("ledger report reproduces the token breakdown arithmetic") {
    TokenLedger ledger;
    ledger.add_raw(Stage::interaction_generation, 13880.0);
    ledger.add_raw(Stage::query_generation, 1824.6);
    ledger.add_raw(Stage::distractor, 1020.0);
    ledger.add_raw(Stage::persona_formulation, 938.2);

    auto rows = ledger_report(ledger, 14.0);
    double total = 0.0;
    for (const auto& r : rows) total += r.tokens;
    CHECK(total == doctest::Approx(17662.8).epsilon(1e-12));

    REQUIRE(rows.size() == 4);
    CHECK(rows[0].stage == "interaction_generation");  // sorted descending
    CHECK(rows[0].percent == doctest::Approx(78.6).epsilon(0.001));
    CHECK(rows[0].cost == doctest::Approx(0.1943).epsilon(0.001));
    CHECK(rows[1].cost == doctest::Approx(0.0255).epsilon(0.005));
    CHECK(rows[2].cost == doctest::Approx(0.0143).epsilon(0.005));
    CHECK(rows[3].cost == doctest::Approx(0.0131).epsilon(0.005));

    double percent_sum = 0.0;
    for (const auto& r : rows) percent_sum += r.percent;
    CHECK(percent_sum == doctest::Approx(100.0).epsilon(0.001));
}

TEST_CASE("ledger report edge cases") {
    TokenLedger empty;
    CHECK_THROWS_AS(ledger_report(empty, 14.0), EmptyLedger);

    TokenLedger lone;
    lone.add_raw(Stage::distractor, 500.0);
    auto rows = ledger_report(lone, 14.0);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].percent == doctest::Approx(100.0));

    TokenLedger even;
    even.add_raw(Stage::interaction_generation, 1.0);
    even.add_raw(Stage::query_generation, 1.0);
    even.add_raw(Stage::distractor, 1.0);
    even.add_raw(Stage::persona_formulation, 1.0);
    for (const auto& r : ledger_report(even, 14.0)) CHECK(r.percent == doctest::Approx(25.0));
}

TEST_CASE("record then replay yields byte-identical responses") {
    std::string cassette = temp_path("cassette.jsonl");
    std::vector<std::string> recorded;
    {
        auto scripted = std::make_shared<ScriptedBackend>();
        RecordingBackend recorder(scripted, cassette);
        for (int i = 0; i < 8; ++i) {
            ChatRequest req = make_request(RoleTag::assistant_agent, "q" + std::to_string(i));
            req.seed = i;
            recorded.push_back(recorder.complete(req).content);
        }
    }
    ReplayBackend replay(cassette);
    for (int i = 0; i < 8; ++i) {
        ChatRequest req = make_request(RoleTag::assistant_agent, "q" + std::to_string(i));
        req.seed = i;
        CHECK(replay.complete(req).content == recorded[i]);
    }
    ChatRequest missing = make_request(RoleTag::assistant_agent, "never recorded");
    CHECK_THROWS_AS(replay.complete(missing), MissingRecording);
    std::remove(cassette.c_str());
}

TEST_CASE("replay consumes repeated identical requests in recorded order") {
    std::string cassette = temp_path("cassette_rep.jsonl");
    {
        auto scripted = std::make_shared<ScriptedBackend>();
        scripted->push_response(RoleTag::user_agent, "first\nVERDICT: SATISFIED");
        scripted->push_response(RoleTag::user_agent, "second\nVERDICT: SATISFIED");
        RecordingBackend recorder(scripted, cassette);
        ChatRequest req = make_request(RoleTag::user_agent, "same request", "give VERDICT");
        recorder.complete(req);
        recorder.complete(req);
    }
    ReplayBackend replay(cassette);
    ChatRequest req = make_request(RoleTag::user_agent, "same request", "give VERDICT");
    CHECK(replay.complete(req).content == "first\nVERDICT: SATISFIED");
    CHECK(replay.complete(req).content == "second\nVERDICT: SATISFIED");
    // last entry stays sticky
    CHECK(replay.complete(req).content == "second\nVERDICT: SATISFIED");
    std::remove(cassette.c_str());
}

namespace {

struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> requests{0};
    std::atomic<int> reject_first{0};
    int reject_status = 429;

    StubServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
            int n = ++requests;
            if (n <= reject_first.load()) {
                res.status = reject_status;
                res.set_content("{\"error\":\"throttled\"}", "application/json");
                return;
            }
            res.set_content(
                "{\"choices\":[{\"message\":{\"role\":\"assistant\",\"content\":\"stub reply\"}}],"
                "\"usage\":{\"prompt_tokens\":11,\"completion_tokens\":7}}",
                "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this]() { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
};

GatewayConfig stub_config(int port) {
    GatewayConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.backoff_base_ms = 5;
    cfg.max_retries = 5;
    return cfg;
}

}  // namespace

TEST_CASE("remote backend retries 429 then succeeds, with exactly 3 requests") {
    StubServer stub;
    stub.reject_first = 2;
    RemoteBackend backend(stub_config(stub.port));
    ChatRequest req = make_request(RoleTag::assistant_agent, "hello");
    ChatResponse resp = backend.complete(req);
    CHECK(resp.content == "stub reply");
    CHECK(resp.usage.prompt_tokens == 11);
    CHECK(resp.usage.completion_tokens == 7);
    CHECK(stub.requests.load() == 3);
}

TEST_CASE("remote backend attempt count is bounded by max_retries + 1") {
    StubServer stub;
    stub.reject_first = 1000;
    stub.reject_status = 503;
    GatewayConfig cfg = stub_config(stub.port);
    cfg.max_retries = 3;
    RemoteBackend backend(cfg);
    ChatRequest req = make_request(RoleTag::assistant_agent, "hello");
    CHECK_THROWS_AS(backend.complete(req), BackendUnavailable);
    CHECK(stub.requests.load() == cfg.max_retries + 1);
}

TEST_CASE("remote backend fails fast on a non-transient status") {
    StubServer stub;
    stub.reject_first = 1000;
    stub.reject_status = 401;
    RemoteBackend backend(stub_config(stub.port));
    ChatRequest req = make_request(RoleTag::assistant_agent, "hello");
    CHECK_THROWS_AS(backend.complete(req), BackendUnavailable);
    CHECK(stub.requests.load() == 1);
}

TEST_CASE("gateway is safe under concurrent completion") {
    auto backend = std::make_shared<ScriptedBackend>();
    GatewayConfig cfg;
    cfg.max_inflight = 4;
    Gateway gateway(backend, cfg);
    std::vector<std::thread> threads;
    std::atomic<int64_t> expected{0};
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t]() {
            for (int i = 0; i < 50; ++i) {
                ChatRequest req = make_request(RoleTag::assistant_agent,
                                               "w" + std::to_string(t) + "-" + std::to_string(i));
                ChatResponse resp = gateway.complete(req, Stage::interaction_generation);
                expected += resp.usage.prompt_tokens + resp.usage.completion_tokens;
            }
        });
    }
    for (auto& th : threads) th.join();
    CHECK(gateway.ledger().grand_total() == doctest::Approx(static_cast<double>(expected.load())));
}
