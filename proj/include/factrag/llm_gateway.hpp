#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace factrag {

/// Sampling knobs passed through to the backend.
struct GenerationParams {
    double temperature = 1.0;
    double top_p = 0.95;
    int top_k = 50;
    bool sample = false;
    int max_tokens = 1024;
};

/// Pipeline stage a completion belongs to; scripted matching and tracing
/// key off it.
enum class Stage { rationale, verify, refine, answer, judge_claims, judge_faithful, judge_grade };

std::string_view stage_name(Stage stage);
Stage stage_from_name(std::string_view name);

struct CompletionRequest {
    std::string system;
    std::string user;
    GenerationParams params;
    Stage stage = Stage::answer;
};

struct CompletionResponse {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    double latency_ms = 0.0;
    std::string backend_id;
};

/// One backend attempt; the gateway owns retries. Implementations throw
/// Error with transient=true for failures worth retrying.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual CompletionResponse complete_once(const CompletionRequest& request) = 0;
};

/// Deterministic canned backend: a pure function of (stage, user text).
/// Lookup order per stage: registered rules, exact entries, contains
/// entries (insertion order), stage default. Loads entries from
/// `<dir>/scripts/*.json`, each file one object or array of
/// {stage, match: "exact"|"contains"|"default", needle, response}.
class ScriptedBackend : public Backend {
public:
    using Rule = std::function<std::optional<std::string>(const CompletionRequest&)>;

    ScriptedBackend() = default;
    explicit ScriptedBackend(const std::filesystem::path& dir);

    std::string id() const override { return "scripted"; }
    CompletionResponse complete_once(const CompletionRequest& request) override;

    void add_exact(Stage stage, std::string needle, std::string response);
    void add_contains(Stage stage, std::string needle, std::string response);
    void add_default(Stage stage, std::string response);
    /// Rules must be pure functions of the request.
    void add_rule(Stage stage, Rule rule);

    int calls() const { return calls_; }
    int calls_for(Stage stage) const;

private:
    struct Entry {
        Stage stage;
        enum class Match { exact, contains, fallback } match;
        std::string needle;
        std::string response;
    };
    std::vector<Entry> entries_;
    std::vector<std::pair<Stage, Rule>> rules_;
    mutable std::mutex mutex_;
    int calls_ = 0;
    int stage_calls_[7] = {};
};

/// Chat-completions wire client: POSTs {model, messages[], temperature,
/// top_p, max_tokens, extensions:{top_k, do_sample}} and reads
/// choices[0].message.content.
struct WireConfig {
    std::string endpoint; // http://host:port
    std::string api_key;
    std::string model;
    std::string path = "/v1/chat/completions";
    int timeout_s = 60;
};

class WireBackend : public Backend {
public:
    explicit WireBackend(WireConfig config);

    std::string id() const override;
    CompletionResponse complete_once(const CompletionRequest& request) override;

private:
    WireConfig config_;
};

struct GatewayConfig {
    int max_retries = 2;  // on transient failures
    int backoff_ms = 100; // doubled per retry
    int max_in_flight = 4;
};

/// Per-slot result of complete_concurrent; failed slots carry the error
/// instead of failing the batch.
struct CompletionOutcome {
    bool ok = false;
    CompletionResponse response;
    std::string error_code;
    std::string error_message;
};

/// Uniform completion interface over a backend: transient-failure retries
/// with exponential backoff, trailing-whitespace trim, empty-completion
/// rejection, and a bounded-concurrency batch call. Shareable across threads.
class LlmGateway {
public:
    explicit LlmGateway(std::shared_ptr<Backend> backend, GatewayConfig config = {});

    CompletionResponse complete(const CompletionRequest& request);
    std::vector<CompletionOutcome> complete_concurrent(const std::vector<CompletionRequest>& requests);

    const GatewayConfig& config() const { return config_; }
    Backend& backend() { return *backend_; }

private:
    std::shared_ptr<Backend> backend_;
    GatewayConfig config_;
};

} // namespace factrag
