#include "factrag/llm_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"

using nlohmann::json;

namespace factrag {

namespace {

constexpr std::string_view kStageNames[] = {"rationale",    "verify",         "refine",
                                            "answer",       "judge_claims",   "judge_faithful",
                                            "judge_grade"};

} // namespace

std::string_view stage_name(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

Stage stage_from_name(std::string_view name) {
    for (int i = 0; i < 7; ++i) {
        if (kStageNames[i] == name) return static_cast<Stage>(i);
    }
    throw Error(ErrorCode::ConfigError, "unknown stage tag: " + std::string(name));
}

ScriptedBackend::ScriptedBackend(const std::filesystem::path& dir) {
    const std::filesystem::path scripts = dir / "scripts";
    if (!std::filesystem::is_directory(scripts)) return;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(scripts)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        json doc = json::parse(in);
        if (!doc.is_array()) doc = json::array({doc});
        for (const json& e : doc) {
            const Stage stage = stage_from_name(e.at("stage").get<std::string>());
            const std::string match = e.value("match", "default");
            const std::string response = e.at("response").get<std::string>();
            if (match == "exact") {
                add_exact(stage, e.at("needle").get<std::string>(), response);
            } else if (match == "contains") {
                add_contains(stage, e.at("needle").get<std::string>(), response);
            } else if (match == "default") {
                add_default(stage, response);
            } else {
                throw Error(ErrorCode::ConfigError, file.string() + ": unknown match kind " + match);
            }
        }
    }
}

void ScriptedBackend::add_exact(Stage stage, std::string needle, std::string response) {
    entries_.push_back({stage, Entry::Match::exact, std::move(needle), std::move(response)});
}

void ScriptedBackend::add_contains(Stage stage, std::string needle, std::string response) {
    entries_.push_back({stage, Entry::Match::contains, std::move(needle), std::move(response)});
}

void ScriptedBackend::add_default(Stage stage, std::string response) {
    entries_.push_back({stage, Entry::Match::fallback, "", std::move(response)});
}

void ScriptedBackend::add_rule(Stage stage, Rule rule) {
    rules_.emplace_back(stage, std::move(rule));
}

int ScriptedBackend::calls_for(Stage stage) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return stage_calls_[static_cast<int>(stage)];
}

CompletionResponse ScriptedBackend::complete_once(const CompletionRequest& request) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++calls_;
        ++stage_calls_[static_cast<int>(request.stage)];
    }

    std::optional<std::string> text;
    for (const auto& [stage, rule] : rules_) {
        if (stage != request.stage) continue;
        if (auto r = rule(request)) {
            text = std::move(r);
            break;
        }
    }
    if (!text) {
        for (auto match : {Entry::Match::exact, Entry::Match::contains, Entry::Match::fallback}) {
            for (const Entry& e : entries_) {
                if (e.stage != request.stage || e.match != match) continue;
                if (match == Entry::Match::exact && request.user != e.needle) continue;
                if (match == Entry::Match::contains && request.user.find(e.needle) == std::string::npos)
                    continue;
                text = e.response;
                break;
            }
            if (text) break;
        }
    }
    if (!text) {
        throw Error(ErrorCode::BackendRefused,
                    "no scripted response for stage " + std::string(stage_name(request.stage)));
    }

    CompletionResponse response;
    response.text = *text;
    response.prompt_tokens = count_tokens(request.system) + count_tokens(request.user);
    response.completion_tokens = count_tokens(response.text);
    response.backend_id = id();
    return response;
}

WireBackend::WireBackend(WireConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw Error(ErrorCode::ConfigError, "wire backend needs an endpoint");
    }
}

std::string WireBackend::id() const { return "wire:" + config_.model; }

CompletionResponse WireBackend::complete_once(const CompletionRequest& request) {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    client.set_write_timeout(config_.timeout_s, 0);

    json body;
    body["model"] = config_.model;
    body["messages"] = json::array({json{{"role", "system"}, {"content", request.system}},
                                    json{{"role", "user"}, {"content", request.user}}});
    body["temperature"] = request.params.temperature;
    body["top_p"] = request.params.top_p;
    body["max_tokens"] = request.params.max_tokens;
    body["extensions"] = json{{"top_k", request.params.top_k}, {"do_sample", request.params.sample}};

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) {
        throw Error(ErrorCode::BackendTimeout,
                    "no response from " + config_.endpoint + " (" + httplib::to_string(res.error()) + ")");
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::BackendRefused,
                    config_.endpoint + " returned " + std::to_string(res->status) + ": " + res->body,
                    res->status >= 500);
    }

    json doc;
    try {
        doc = json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendRefused, "unparseable completion body: " + std::string(e.what()));
    }
    CompletionResponse response;
    try {
        response.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::BackendRefused, "completion body missing choices[0].message.content");
    }
    if (doc.contains("usage")) {
        response.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
        response.completion_tokens = doc["usage"].value("completion_tokens", 0);
    }
    response.backend_id = id();
    return response;
}

LlmGateway::LlmGateway(std::shared_ptr<Backend> backend, GatewayConfig config)
    : backend_(std::move(backend)), config_(config) {
    if (!backend_) throw Error(ErrorCode::ConfigError, "gateway needs a backend");
}

CompletionResponse LlmGateway::complete(const CompletionRequest& request) {
    if (request.system.empty() || request.user.empty()) {
        throw Error(ErrorCode::PreconditionViolation, "completion request texts must be non-empty");
    }
    int attempt = 0;
    for (;;) {
        try {
            const auto start = std::chrono::steady_clock::now();
            CompletionResponse response = backend_->complete_once(request);
            response.latency_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
            if (response.backend_id.empty()) response.backend_id = backend_->id();
            while (!response.text.empty() &&
                   std::isspace(static_cast<unsigned char>(response.text.back()))) {
                response.text.pop_back();
            }
            if (response.text.empty()) {
                throw Error(ErrorCode::EmptyCompletion,
                            "backend returned empty completion for stage " +
                                std::string(stage_name(request.stage)));
            }
            return response;
        } catch (const Error& e) {
            if (!e.transient() || attempt >= config_.max_retries) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << attempt));
            ++attempt;
        }
    }
}

std::vector<CompletionOutcome> LlmGateway::complete_concurrent(
    const std::vector<CompletionRequest>& requests) {
    if (requests.empty()) {
        throw Error(ErrorCode::PreconditionViolation, "complete_concurrent needs >= 1 request");
    }
    std::vector<CompletionOutcome> out(requests.size());
    std::atomic<std::size_t> next{0};
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(config_.max_in_flight), requests.size());

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            try {
                out[i].response = complete(requests[i]);
                out[i].ok = true;
            } catch (const Error& e) {
                out[i].error_code = std::string(code_name(e.code()));
                out[i].error_message = e.what();
            } catch (const std::exception& e) {
                out[i].error_code = std::string(code_name(ErrorCode::BackendRefused));
                out[i].error_message = e.what();
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    return out;
}

} // namespace factrag
