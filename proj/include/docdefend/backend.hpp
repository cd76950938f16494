#ifndef DOCDEFEND_BACKEND_HPP
#define DOCDEFEND_BACKEND_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace docdefend {

struct SamplingParams {
    double temperature = 0.0;  // 0 = greedy
    int max_new_tokens = 64;
    std::optional<uint64_t> seed;

    void Validate() const;
};

// Uniform generation surface. Implementations must be safe for concurrent
// Generate calls; callers bound concurrency themselves.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;

    // Returns the decoded continuation only; the prompt is never echoed.
    virtual std::string Generate(const std::string& prompt, const SamplingParams& params) = 0;

    virtual std::string Id() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend for tests and dry runs.

class MockBackend : public GenerationBackend {
public:
    using Policy = std::function<std::string(const std::string& prompt, int call_index)>;

    MockBackend(std::string id, Policy policy);

    std::string Generate(const std::string& prompt, const SamplingParams& params) override;
    std::string Id() const override { return id_; }

    int calls() const;

    static std::unique_ptr<MockBackend> AlwaysRefuse();
    static std::unique_ptr<MockBackend> AlwaysComply();
    // Refuses iff the prompt contains the marker substring.
    static std::unique_ptr<MockBackend> RefuseIfContains(std::string marker);
    // Plays the scripted responses in order, repeating the last one.
    static std::unique_ptr<MockBackend> Script(std::vector<std::string> responses);

    // Named policies for the CLI: always-refuse | always-comply |
    // refuse-if-contains (needs marker) | hash-even.
    static std::unique_ptr<MockBackend> FromPolicyName(const std::string& name,
                                                       const std::string& marker);

private:
    std::string id_;
    Policy policy_;
    mutable std::mutex mutex_;
    int calls_ = 0;
};

inline constexpr const char* kDefaultMockRefusal = "I cannot assist with that request.";
inline constexpr const char* kDefaultMockCompliance =
    "Here is the result you asked for, based on the provided text.";

// ---------------------------------------------------------------------------
// Client for a remote text-generation service.
//
// Request:  POST <path> with JSON {"prompt", "temperature", "max_new_tokens",
//           "seed"?}; response: 200 with JSON {"text": "..."}.
// Transient failures are retried with exponential backoff.

struct RemoteBackendConfig {
    std::string base_url;          // e.g. http://127.0.0.1:8000
    std::string path = "/generate";
    std::string api_key;           // sent as "Authorization: Bearer <key>" when set
    int max_attempts = 3;
    int backoff_initial_ms = 250;
    int timeout_seconds = 60;
};

class RemoteBackend : public GenerationBackend {
public:
    explicit RemoteBackend(RemoteBackendConfig config);

    std::string Generate(const std::string& prompt, const SamplingParams& params) override;
    std::string Id() const override { return "remote:" + config_.base_url + config_.path; }

    // Reads DOCDEFEND_ENDPOINT and DOCDEFEND_API_KEY.
    static RemoteBackendConfig ConfigFromEnv();

private:
    RemoteBackendConfig config_;
};

}  // namespace docdefend

#endif  // DOCDEFEND_BACKEND_HPP
