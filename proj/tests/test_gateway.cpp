#include <doctest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "factrag/errors.hpp"
#include "factrag/llm_gateway.hpp"
#include "factrag/retriever.hpp"

using namespace factrag;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

CompletionRequest req(Stage stage, const std::string& user) {
    CompletionRequest r;
    r.stage = stage;
    r.system = "system text";
    r.user = user;
    return r;
}

// Backend that fails transiently a fixed number of times, then succeeds.
class FlakyBackend : public Backend {
public:
    FlakyBackend(int failures, std::string text, ErrorCode code = ErrorCode::BackendTimeout,
                 bool transient = true)
        : failures_(failures), text_(std::move(text)), code_(code), transient_(transient) {}

    std::string id() const override { return "flaky"; }

    CompletionResponse complete_once(const CompletionRequest&) override {
        ++attempts_;
        if (attempts_ <= failures_) throw Error(code_, "induced failure", transient_);
        CompletionResponse r;
        r.text = text_;
        return r;
    }

    int attempts() const { return attempts_; }

private:
    int failures_;
    std::string text_;
    ErrorCode code_;
    bool transient_;
    int attempts_ = 0;
};

GatewayConfig fast_config() {
    GatewayConfig c;
    c.backoff_ms = 1;
    return c;
}

} // namespace

TEST_CASE("generation and retrieval defaults match the documented values") {
    GenerationParams p;
    CHECK(p.temperature == 1.0);
    CHECK(p.top_p == 0.95);
    CHECK(p.top_k == 50);
    CHECK(p.sample == false);
    CHECK(p.max_tokens == 1024);

    RetrievalConfig r;
    CHECK(r.p_k == 5);
    CHECK(r.lambda == 0.3);
    CHECK(r.rrf_k == 60);
    CHECK(r.budget_tokens == 0);
    CHECK(r.web_k == 0);
}

TEST_CASE("stage names round-trip and unknown tags are rejected") {
    for (Stage s : {Stage::rationale, Stage::verify, Stage::refine, Stage::answer,
                    Stage::judge_claims, Stage::judge_faithful, Stage::judge_grade}) {
        CHECK(stage_from_name(stage_name(s)) == s);
    }
    CHECK(stage_name(Stage::rationale) == "rationale");
    CHECK_THROWS_AS(stage_from_name("nonsense"), Error);
}

TEST_CASE("scripted lookup prefers rules, then exact, then contains, then default") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_default(Stage::answer, "default answer");
    backend->add_contains(Stage::answer, "needle", "contains answer");
    backend->add_exact(Stage::answer, "the needle prompt", "exact answer");
    backend->add_rule(Stage::answer, [](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.user.find("rule me") != std::string::npos) return "rule answer";
        return std::nullopt;
    });

    LlmGateway gateway(backend, fast_config());
    CHECK(gateway.complete(req(Stage::answer, "please rule me with a needle")).text == "rule answer");
    CHECK(gateway.complete(req(Stage::answer, "the needle prompt")).text == "exact answer");
    CHECK(gateway.complete(req(Stage::answer, "has the needle inside")).text == "contains answer");
    CHECK(gateway.complete(req(Stage::answer, "nothing matches")).text == "default answer");
}

TEST_CASE("scripted contains entries match in insertion order") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_contains(Stage::answer, "alpha", "first");
    backend->add_contains(Stage::answer, "beta", "second");
    LlmGateway gateway(backend, fast_config());
    CHECK(gateway.complete(req(Stage::answer, "beta then alpha")).text == "first");
}

TEST_CASE("scripted entries are isolated by stage") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_default(Stage::answer, "answer text");
    LlmGateway gateway(backend, fast_config());
    CHECK(gateway.complete(req(Stage::answer, "q")).text == "answer text");
    try {
        gateway.complete(req(Stage::verify, "q"));
        FAIL("expected BackendRefused");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BackendRefused);
        CHECK(std::string(e.what()).find("verify") != std::string::npos);
    }
    CHECK(backend->calls_for(Stage::answer) == 1);
    CHECK(backend->calls_for(Stage::verify) == 1);
    CHECK(backend->calls() == 2);
}

TEST_CASE("scripted backend loads script files from a directory") {
    const fs::path dir = fs::temp_directory_path() / "factrag_gateway_scripts";
    fs::remove_all(dir);
    fs::create_directories(dir / "scripts");
    {
        std::ofstream a(dir / "scripts" / "a.json");
        a << json::array({{{"stage", "answer"},
                           {"match", "contains"},
                           {"needle", "aspirin"},
                           {"response", "scripted aspirin answer"}}})
                 .dump();
        std::ofstream b(dir / "scripts" / "b.json");
        b << json{{"stage", "answer"}, {"match", "default"}, {"response", "fallback"}}.dump();
    }
    LlmGateway gateway(std::make_shared<ScriptedBackend>(dir), fast_config());
    CHECK(gateway.complete(req(Stage::answer, "ask about aspirin")).text ==
          "scripted aspirin answer");
    CHECK(gateway.complete(req(Stage::answer, "something else")).text == "fallback");

    {
        std::ofstream bad(dir / "scripts" / "c.json");
        bad << json{{"stage", "answer"}, {"match", "fuzzy"}, {"response", "x"}}.dump();
    }
    CHECK_THROWS_AS(ScriptedBackend{dir}, Error);
}

TEST_CASE("gateway trims trailing whitespace and rejects empty completions") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_default(Stage::answer, "answer body \n\t ");
    backend->add_default(Stage::verify, " \n ");
    LlmGateway gateway(backend, fast_config());
    CHECK(gateway.complete(req(Stage::answer, "q")).text == "answer body");
    try {
        gateway.complete(req(Stage::verify, "q"));
        FAIL("expected EmptyCompletion");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyCompletion);
    }
    // Leading whitespace is preserved.
    auto lead = std::make_shared<ScriptedBackend>();
    lead->add_default(Stage::answer, "  indented");
    CHECK(LlmGateway(lead, fast_config()).complete(req(Stage::answer, "q")).text == "  indented");
}

TEST_CASE("empty request texts are rejected before reaching the backend") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_default(Stage::answer, "a");
    LlmGateway gateway(backend, fast_config());
    CompletionRequest r = req(Stage::answer, "");
    CHECK_THROWS_AS(gateway.complete(r), Error);
    r.user = "q";
    r.system = "";
    CHECK_THROWS_AS(gateway.complete(r), Error);
    CHECK(backend->calls() == 0);
}

TEST_CASE("transient failures are retried up to max_retries") {
    SUBCASE("two failures then success means three attempts") {
        auto backend = std::make_shared<FlakyBackend>(2, "recovered");
        LlmGateway gateway(backend, fast_config());
        CHECK(gateway.complete(req(Stage::answer, "q")).text == "recovered");
        CHECK(backend->attempts() == 3);
    }
    SUBCASE("three failures exhaust the budget") {
        auto backend = std::make_shared<FlakyBackend>(3, "never");
        LlmGateway gateway(backend, fast_config());
        try {
            gateway.complete(req(Stage::answer, "q"));
            FAIL("expected BackendTimeout");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BackendTimeout);
        }
        CHECK(backend->attempts() == 3);
    }
    SUBCASE("non-transient failures are not retried") {
        auto backend =
            std::make_shared<FlakyBackend>(5, "never", ErrorCode::BackendRefused, false);
        LlmGateway gateway(backend, fast_config());
        CHECK_THROWS_AS(gateway.complete(req(Stage::answer, "q")), Error);
        CHECK(backend->attempts() == 1);
    }
    SUBCASE("timeouts are always treated as transient") {
        // The error type forces the flag for timeout codes.
        CHECK(Error(ErrorCode::BackendTimeout, "m", false).transient());
    }
    SUBCASE("zero retries fails on the first transient error") {
        auto backend = std::make_shared<FlakyBackend>(1, "never");
        GatewayConfig config = fast_config();
        config.max_retries = 0;
        LlmGateway gateway(backend, config);
        CHECK_THROWS_AS(gateway.complete(req(Stage::answer, "q")), Error);
        CHECK(backend->attempts() == 1);
    }
}

TEST_CASE("wire backend speaks the chat-completions shape") {
    httplib::Server server;
    std::mutex mu;
    json seen_body;
    std::string seen_auth;
    std::atomic<int> hits{0};

    server.Post("/v1/chat/completions", [&](const httplib::Request& r, httplib::Response& res) {
        {
            std::lock_guard<std::mutex> lock(mu);
            seen_body = json::parse(r.body);
            if (r.has_header("Authorization")) seen_auth = r.get_header_value("Authorization");
        }
        const int n = ++hits;
        if (n <= 2) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
            return;
        }
        const json reply = {
            {"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "wire reply \n"}}}}})},
            {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}},
        };
        res.set_content(reply.dump(), "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    WireConfig wc;
    wc.endpoint = "http://127.0.0.1:" + std::to_string(port);
    wc.api_key = "k123";
    wc.model = "test-model";
    auto backend = std::make_shared<WireBackend>(wc);
    CHECK(backend->id() == "wire:test-model");
    LlmGateway gateway(backend, fast_config());

    CompletionRequest r = req(Stage::answer, "What does aspirin inhibit?");
    r.params.temperature = 0.5;
    r.params.top_k = 12;
    r.params.sample = true;
    const CompletionResponse got = gateway.complete(r);

    CHECK(got.text == "wire reply");
    CHECK(got.prompt_tokens == 7);
    CHECK(got.completion_tokens == 3);
    CHECK(got.backend_id == "wire:test-model");
    CHECK(hits.load() == 3); // two 500s retried, then success

    {
        std::lock_guard<std::mutex> lock(mu);
        CHECK(seen_auth == "Bearer k123");
        CHECK(seen_body["model"] == "test-model");
        CHECK(seen_body["messages"][0]["role"] == "system");
        CHECK(seen_body["messages"][0]["content"] == "system text");
        CHECK(seen_body["messages"][1]["role"] == "user");
        CHECK(seen_body["messages"][1]["content"] == "What does aspirin inhibit?");
        CHECK(seen_body["temperature"] == 0.5);
        CHECK(seen_body["top_p"] == 0.95);
        CHECK(seen_body["max_tokens"] == 1024);
        CHECK(seen_body["extensions"]["top_k"] == 12);
        CHECK(seen_body["extensions"]["do_sample"] == true);
    }

    server.stop();
    listener.join();
}

TEST_CASE("wire backend maps persistent 4xx to a non-transient refusal") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 401;
        res.set_content("bad key", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    WireConfig wc;
    wc.endpoint = "http://127.0.0.1:" + std::to_string(port);
    wc.model = "m";
    LlmGateway gateway(std::make_shared<WireBackend>(wc), fast_config());
    try {
        gateway.complete(req(Stage::answer, "q"));
        FAIL("expected BackendRefused");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BackendRefused);
        CHECK_FALSE(e.transient());
    }

    server.stop();
    listener.join();
    CHECK_THROWS_AS(WireBackend{WireConfig{}}, Error);
}

TEST_CASE("concurrent completion preserves slot order under staggered latency") {
    auto backend = std::make_shared<ScriptedBackend>();
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    backend->add_rule(Stage::answer, [&](const CompletionRequest& r) -> std::optional<std::string> {
        const int now = ++in_flight;
        int expected = peak.load();
        while (now > expected && !peak.compare_exchange_weak(expected, now)) {
        }
        // Early slots sleep longest so completion order inverts arrival
        // order; positional results must still line up.
        const std::size_t n = r.user.find("REQ-") + 4;
        const int idx = std::stoi(r.user.substr(n));
        std::this_thread::sleep_for(std::chrono::milliseconds(3 * (8 - idx)));
        --in_flight;
        return "reply to REQ-" + std::to_string(idx);
    });
    LlmGateway gateway(backend, fast_config());

    std::vector<CompletionRequest> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(req(Stage::answer, "REQ-" + std::to_string(i)));
    const auto outcomes = gateway.complete_concurrent(batch);
    REQUIRE(outcomes.size() == 8);
    for (int i = 0; i < 8; ++i) {
        CAPTURE(i);
        CHECK(outcomes[i].ok);
        CHECK(outcomes[i].response.text == "reply to REQ-" + std::to_string(i));
    }
    CHECK(peak.load() <= gateway.config().max_in_flight);
    CHECK(peak.load() >= 2);
}

TEST_CASE("concurrent completion isolates failures to their slot") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_contains(Stage::verify, "good", "VERIFIED");
    LlmGateway gateway(backend, fast_config());

    const auto outcomes = gateway.complete_concurrent(
        {req(Stage::verify, "good one"), req(Stage::verify, "unmatched"), req(Stage::verify, "good two")});
    REQUIRE(outcomes.size() == 3);
    CHECK(outcomes[0].ok);
    CHECK(outcomes[2].ok);
    CHECK_FALSE(outcomes[1].ok);
    CHECK(outcomes[1].error_code == "BackendRefused");
    CHECK(outcomes[1].error_message.find("no scripted response") != std::string::npos);
    CHECK(code_from_name(outcomes[1].error_code) == ErrorCode::BackendRefused);

    CHECK_THROWS_AS(gateway.complete_concurrent({}), Error);
}

TEST_CASE("gateway requires a backend") {
    CHECK_THROWS_AS(LlmGateway(nullptr), Error);
}
