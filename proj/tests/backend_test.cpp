#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "docdefend/backend.hpp"
#include "docdefend/common.hpp"

using namespace docdefend;

TEST_CASE("sampling params validation") {
    SamplingParams params;
    params.temperature = -0.1;
    CHECK_THROWS_AS(params.Validate(), Error);
    params.temperature = 0.7;
    params.max_new_tokens = 0;
    CHECK_THROWS_AS(params.Validate(), Error);
    params.max_new_tokens = 16;
    CHECK_NOTHROW(params.Validate());
}

TEST_CASE("mock policies") {
    SamplingParams params;
    auto refuse = MockBackend::AlwaysRefuse();
    CHECK(refuse->Generate("whatever", params) == kDefaultMockRefusal);

    auto comply = MockBackend::AlwaysComply();
    CHECK(comply->Generate("whatever", params) == kDefaultMockCompliance);

    auto keyed = MockBackend::RefuseIfContains("hazard");
    CHECK(keyed->Generate("a hazard notice", params) == kDefaultMockRefusal);
    CHECK(keyed->Generate("a calm notice", params) == kDefaultMockCompliance);

    auto scripted = MockBackend::Script({"one", "two"});
    CHECK(scripted->Generate("p", params) == "one");
    CHECK(scripted->Generate("p", params) == "two");
    CHECK(scripted->Generate("p", params) == "two");  // repeats the last entry
    CHECK(scripted->calls() == 3);

    auto hashed = MockBackend::FromPolicyName("hash-even", "");
    CHECK(hashed->Generate("abc", params) == hashed->Generate("abc", params));

    CHECK_THROWS_AS(MockBackend::FromPolicyName("nope", ""), Error);
    CHECK_THROWS_AS(MockBackend::FromPolicyName("refuse-if-contains", ""), Error);
}

namespace {

struct TestServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit TestServer(httplib::Server::Handler handler) {
        server.Post("/generate", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer() {
        server.stop();
        thread.join();
    }
    std::string Url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

RemoteBackendConfig FastConfig(const std::string& url) {
    RemoteBackendConfig config;
    config.base_url = url;
    config.backoff_initial_ms = 1;
    config.timeout_seconds = 5;
    return config;
}

}  // namespace

TEST_CASE("remote backend round-trips the documented fields") {
    nlohmann::json seen;
    TestServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"text": "I cannot help with that."})", "application/json");
    });
    RemoteBackend backend(FastConfig(server.Url()));
    SamplingParams params{0.7, 128, uint64_t{42}};
    std::string text = backend.Generate("summarize this", params);
    CHECK(text == "I cannot help with that.");
    CHECK(seen["prompt"] == "summarize this");
    CHECK(seen["temperature"] == doctest::Approx(0.7));
    CHECK(seen["max_new_tokens"] == 128);
    CHECK(seen["seed"] == 42);
}

TEST_CASE("remote backend retries transient failures") {
    std::atomic<int> hits{0};
    TestServer server([&](const httplib::Request&, httplib::Response& res) {
        if (hits.fetch_add(1) < 2) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"text": "ok"})", "application/json");
    });
    RemoteBackend backend(FastConfig(server.Url()));
    CHECK(backend.Generate("p", SamplingParams{}) == "ok");
    CHECK(hits.load() == 3);
}

TEST_CASE("remote backend surfaces exhaustion with attempt count") {
    TestServer server([&](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    RemoteBackend backend(FastConfig(server.Url()));
    try {
        backend.Generate("p", SamplingParams{});
        FAIL("expected backend error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kBackend);
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
}

TEST_CASE("remote backend rejects malformed responses and hard failures") {
    TestServer server([&](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        std::string prompt = body["prompt"];
        if (prompt == "no-text") {
            res.set_content(R"({"output": "wrong field"})", "application/json");
        } else if (prompt == "not-json") {
            res.set_content("plain text", "text/plain");
        } else {
            res.status = 404;
        }
    });
    RemoteBackend backend(FastConfig(server.Url()));
    CHECK_THROWS_AS(backend.Generate("no-text", SamplingParams{}), Error);
    CHECK_THROWS_AS(backend.Generate("not-json", SamplingParams{}), Error);
    CHECK_THROWS_AS(backend.Generate("hard-404", SamplingParams{}), Error);
}

TEST_CASE("remote backend rejects empty prompts without a network call") {
    RemoteBackend backend(FastConfig("http://127.0.0.1:9"));
    CHECK_THROWS_AS(backend.Generate("", SamplingParams{}), Error);
}

TEST_CASE("remote config comes from the environment") {
    setenv("DOCDEFEND_ENDPOINT", "http://example.invalid:8000", 1);
    setenv("DOCDEFEND_API_KEY", "k-123", 1);
    auto config = RemoteBackend::ConfigFromEnv();
    CHECK(config.base_url == "http://example.invalid:8000");
    CHECK(config.api_key == "k-123");
    unsetenv("DOCDEFEND_ENDPOINT");
    unsetenv("DOCDEFEND_API_KEY");
}
