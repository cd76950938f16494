#include "docdefend/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "docdefend/common.hpp"

namespace docdefend {

void SamplingParams::Validate() const {
    if (temperature < 0.0) ThrowValidation("temperature must be >= 0");
    if (max_new_tokens < 1) ThrowValidation("max_new_tokens must be >= 1");
}

MockBackend::MockBackend(std::string id, Policy policy)
    : id_(std::move(id)), policy_(std::move(policy)) {}

std::string MockBackend::Generate(const std::string& prompt, const SamplingParams& params) {
    params.Validate();
    int index;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        index = calls_++;
    }
    return policy_(prompt, index);
}

int MockBackend::calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
}

std::unique_ptr<MockBackend> MockBackend::AlwaysRefuse() {
    return std::make_unique<MockBackend>(
        "mock:always-refuse",
        [](const std::string&, int) { return std::string(kDefaultMockRefusal); });
}

std::unique_ptr<MockBackend> MockBackend::AlwaysComply() {
    return std::make_unique<MockBackend>(
        "mock:always-comply",
        [](const std::string&, int) { return std::string(kDefaultMockCompliance); });
}

std::unique_ptr<MockBackend> MockBackend::RefuseIfContains(std::string marker) {
    return std::make_unique<MockBackend>(
        "mock:refuse-if-contains",
        [marker = std::move(marker)](const std::string& prompt, int) {
            return prompt.find(marker) != std::string::npos ? std::string(kDefaultMockRefusal)
                                                            : std::string(kDefaultMockCompliance);
        });
}

std::unique_ptr<MockBackend> MockBackend::Script(std::vector<std::string> responses) {
    if (responses.empty()) ThrowValidation("scripted mock needs at least one response");
    return std::make_unique<MockBackend>(
        "mock:script",
        [responses = std::move(responses)](const std::string&, int index) {
            size_t i = std::min<size_t>(index, responses.size() - 1);
            return responses[i];
        });
}

std::unique_ptr<MockBackend> MockBackend::FromPolicyName(const std::string& name,
                                                         const std::string& marker) {
    if (name == "always-refuse") return AlwaysRefuse();
    if (name == "always-comply") return AlwaysComply();
    if (name == "refuse-if-contains") {
        if (marker.empty()) ThrowValidation("mock policy refuse-if-contains needs a marker");
        return RefuseIfContains(marker);
    }
    if (name == "hash-even") {
        // Stateless pseudo-random split keyed off the prompt itself.
        return std::make_unique<MockBackend>(
            "mock:hash-even", [](const std::string& prompt, int) {
                return (Fnv1a64(prompt) % 2 == 0) ? std::string(kDefaultMockRefusal)
                                                  : std::string(kDefaultMockCompliance);
            });
    }
    ThrowValidation("unknown mock policy: " + name);
}

RemoteBackend::RemoteBackend(RemoteBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) ThrowValidation("remote backend needs a base URL");
    if (config_.max_attempts < 1) ThrowValidation("remote backend max_attempts must be >= 1");
}

RemoteBackendConfig RemoteBackend::ConfigFromEnv() {
    RemoteBackendConfig config;
    if (const char* url = std::getenv("DOCDEFEND_ENDPOINT")) config.base_url = url;
    if (const char* key = std::getenv("DOCDEFEND_API_KEY")) config.api_key = key;
    return config;
}

std::string RemoteBackend::Generate(const std::string& prompt, const SamplingParams& params) {
    if (prompt.empty()) ThrowValidation("prompt must be non-empty");
    params.Validate();

    nlohmann::json request;
    request["prompt"] = prompt;
    request["temperature"] = params.temperature;
    request["max_new_tokens"] = params.max_new_tokens;
    if (params.seed) request["seed"] = *params.seed;
    const std::string body = request.dump();

    std::string last_error;
    int backoff_ms = config_.backoff_initial_ms;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!config_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        }
        auto res = client.Post(config_.path, headers, body, "application/json");
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            ThrowBackend("remote backend returned status " + std::to_string(res->status) +
                         " for " + config_.base_url + config_.path);
        }
        nlohmann::json response = nlohmann::json::parse(res->body, nullptr, false);
        if (response.is_discarded() || !response.contains("text") || !response["text"].is_string()) {
            ThrowBackend("remote backend response lacks a text field");
        }
        return response["text"].get<std::string>();
    }
    ThrowBackend("remote backend unreachable after " + std::to_string(config_.max_attempts) +
                 " attempts (" + last_error + "): " + config_.base_url + config_.path);
}

}  // namespace docdefend
