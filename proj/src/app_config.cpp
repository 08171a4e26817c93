#include "factrag/app_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"

using nlohmann::json;

namespace factrag {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, std::filesystem::path p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

BackendConfig backend_from_json(const json& obj, const BackendConfig& defaults) {
    BackendConfig cfg = defaults;
    cfg.kind = obj.value("kind", cfg.kind);
    cfg.scripted_dir = obj.value("scripted_dir", cfg.scripted_dir.string());
    cfg.wire.endpoint = obj.value("endpoint", cfg.wire.endpoint);
    cfg.wire.api_key = obj.value("api_key", cfg.wire.api_key);
    cfg.wire.model = obj.value("model", cfg.wire.model);
    cfg.wire.path = obj.value("path", cfg.wire.path);
    cfg.wire.timeout_s = obj.value("timeout_s", cfg.wire.timeout_s);
    return cfg;
}

json backend_to_json(const BackendConfig& cfg) {
    return json{{"kind", cfg.kind},
                {"scripted_dir", cfg.scripted_dir.string()},
                {"endpoint", cfg.wire.endpoint},
                {"model", cfg.wire.model},
                {"path", cfg.wire.path},
                {"timeout_s", cfg.wire.timeout_s}};
}

} // namespace

AppConfig AppConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, path.string() + " is not valid JSON: " + e.what());
    }

    AppConfig cfg;
    cfg.store_root = doc.value("store_root", cfg.store_root.string());
    cfg.template_dir = doc.value("template_dir", cfg.template_dir.string());
    cfg.trace_dir = doc.value("trace_dir", cfg.trace_dir.string());
    cfg.web_fixture_dir = doc.value("web_fixture_dir", cfg.web_fixture_dir.string());

    if (doc.contains("backend")) cfg.backend = backend_from_json(doc.at("backend"), cfg.backend);
    cfg.judge = doc.contains("judge") ? backend_from_json(doc.at("judge"), cfg.backend) : cfg.backend;

    if (doc.contains("embedding")) {
        const json& e = doc.at("embedding");
        cfg.embedding.dim = e.value("dim", cfg.embedding.dim);
        cfg.embedding.seed = e.value("seed", cfg.embedding.seed);
    }
    if (doc.contains("chunking")) {
        const json& c = doc.at("chunking");
        cfg.chunking.max_chunk_tokens = c.value("max_chunk_tokens", cfg.chunking.max_chunk_tokens);
        cfg.chunking.overlap_tokens = c.value("overlap_tokens", cfg.chunking.overlap_tokens);
    }
    if (doc.contains("retrieval")) {
        const json& r = doc.at("retrieval");
        cfg.retrieval.p_k = r.value("p_k", cfg.retrieval.p_k);
        cfg.retrieval.lambda = r.value("lambda", cfg.retrieval.lambda);
        cfg.retrieval.rrf_k = r.value("rrf_k", cfg.retrieval.rrf_k);
        cfg.retrieval.budget_tokens = r.value("budget_tokens", cfg.retrieval.budget_tokens);
        cfg.retrieval.web_k = r.value("web_k", cfg.retrieval.web_k);
        cfg.retrieval.whitelist =
            r.value("whitelist", std::vector<std::string>(cfg.retrieval.whitelist));
    }
    if (doc.contains("generation")) {
        const json& g = doc.at("generation");
        cfg.params.temperature = g.value("temperature", cfg.params.temperature);
        cfg.params.top_p = g.value("top_p", cfg.params.top_p);
        cfg.params.top_k = g.value("top_k", cfg.params.top_k);
        cfg.params.sample = g.value("sample", cfg.params.sample);
        cfg.params.max_tokens = g.value("max_tokens", cfg.params.max_tokens);
    }
    if (doc.contains("gateway")) {
        const json& g = doc.at("gateway");
        cfg.gateway.max_retries = g.value("max_retries", cfg.gateway.max_retries);
        cfg.gateway.backoff_ms = g.value("backoff_ms", cfg.gateway.backoff_ms);
        cfg.gateway.max_in_flight = g.value("max_in_flight", cfg.gateway.max_in_flight);
    }
    if (doc.contains("pipeline")) {
        const json& p = doc.at("pipeline");
        cfg.default_mode = p.value("default_mode", cfg.default_mode);
        cfg.refine_loops = p.value("refine_loops", cfg.refine_loops);
        cfg.verify_concurrent = p.value("verify_concurrent", cfg.verify_concurrent);
    }
    if (doc.contains("eval")) {
        cfg.eval_parallelism = doc.at("eval").value("parallelism", cfg.eval_parallelism);
    }
    if (doc.contains("serve")) {
        cfg.serve_addr = doc.at("serve").value("addr", cfg.serve_addr);
    }

    const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
    cfg.store_root = resolve(base, cfg.store_root);
    cfg.template_dir = resolve(base, cfg.template_dir);
    cfg.trace_dir = resolve(base, cfg.trace_dir);
    cfg.web_fixture_dir = resolve(base, cfg.web_fixture_dir);
    cfg.backend.scripted_dir = resolve(base, cfg.backend.scripted_dir);
    cfg.judge.scripted_dir = resolve(base, cfg.judge.scripted_dir);

    cfg.apply_env_overrides();
    cfg.validate();
    return cfg;
}

void AppConfig::apply_env_overrides() {
    if (const char* endpoint = std::getenv("LLM_ENDPOINT"); endpoint && *endpoint) {
        backend.kind = "wire";
        backend.wire.endpoint = endpoint;
        if (judge.kind != "wire" || judge.wire.endpoint.empty()) {
            judge.kind = "wire";
            judge.wire.endpoint = endpoint;
        }
    }
    if (const char* key = std::getenv("LLM_API_KEY"); key && *key) {
        backend.wire.api_key = key;
        if (judge.wire.api_key.empty()) judge.wire.api_key = key;
    }
    if (const char* model = std::getenv("LLM_MODEL"); model && *model) {
        backend.wire.model = model;
        if (judge.wire.model.empty()) judge.wire.model = model;
    }
    if (const char* timeout = std::getenv("LLM_TIMEOUT_S"); timeout && *timeout) {
        backend.wire.timeout_s = std::atoi(timeout);
        judge.wire.timeout_s = backend.wire.timeout_s;
    }
}

void AppConfig::validate() const {
    auto check_backend = [](const BackendConfig& b, const char* which) {
        if (b.kind != "scripted" && b.kind != "wire") {
            throw Error(ErrorCode::ConfigError,
                        std::string(which) + " backend kind must be scripted or wire, got " + b.kind);
        }
        if (b.kind == "wire" && b.wire.endpoint.empty()) {
            throw Error(ErrorCode::ConfigError, std::string(which) + " wire backend needs an endpoint");
        }
        if (b.kind == "wire" && b.wire.timeout_s <= 0) {
            throw Error(ErrorCode::ConfigError, std::string(which) + " backend timeout_s must be > 0");
        }
    };
    check_backend(backend, "generator");
    check_backend(judge, "judge");
    if (embedding.dim == 0) throw Error(ErrorCode::ConfigError, "embedding dim must be > 0");
    if (chunking.max_chunk_tokens <= 0 || chunking.overlap_tokens < 0 ||
        chunking.overlap_tokens >= chunking.max_chunk_tokens) {
        throw Error(ErrorCode::ConfigError, "chunking needs 0 <= overlap < max_chunk_tokens");
    }
    if (retrieval.p_k < 1) throw Error(ErrorCode::ConfigError, "retrieval p_k must be >= 1");
    if (retrieval.lambda < 0.0 || retrieval.lambda > 1.0) {
        throw Error(ErrorCode::ConfigError, "retrieval lambda must lie in [0,1]");
    }
    if (retrieval.rrf_k < 1) throw Error(ErrorCode::ConfigError, "retrieval rrf_k must be >= 1");
    if (params.max_tokens < 1) throw Error(ErrorCode::ConfigError, "max_tokens must be >= 1");
    if (refine_loops < 1 || refine_loops > 3) {
        throw Error(ErrorCode::ConfigError, "refine_loops must be 1..3");
    }
    if (eval_parallelism < 1) throw Error(ErrorCode::ConfigError, "eval parallelism must be >= 1");
    mode_from_name(default_mode); // throws on unknown modes
}

std::string AppConfig::to_json() const {
    json doc;
    doc["store_root"] = store_root.string();
    doc["template_dir"] = template_dir.string();
    doc["trace_dir"] = trace_dir.string();
    doc["web_fixture_dir"] = web_fixture_dir.string();
    doc["backend"] = backend_to_json(backend);
    doc["judge"] = backend_to_json(judge);
    doc["embedding"] = json{{"dim", embedding.dim}, {"seed", embedding.seed}};
    doc["chunking"] = json{{"max_chunk_tokens", chunking.max_chunk_tokens},
                           {"overlap_tokens", chunking.overlap_tokens}};
    doc["retrieval"] = json{{"p_k", retrieval.p_k},
                            {"lambda", retrieval.lambda},
                            {"rrf_k", retrieval.rrf_k},
                            {"budget_tokens", retrieval.budget_tokens},
                            {"web_k", retrieval.web_k},
                            {"whitelist", retrieval.whitelist}};
    doc["generation"] = json{{"temperature", params.temperature},
                             {"top_p", params.top_p},
                             {"top_k", params.top_k},
                             {"sample", params.sample},
                             {"max_tokens", params.max_tokens}};
    doc["gateway"] = json{{"max_retries", gateway.max_retries},
                          {"backoff_ms", gateway.backoff_ms},
                          {"max_in_flight", gateway.max_in_flight}};
    doc["pipeline"] = json{{"default_mode", default_mode},
                           {"refine_loops", refine_loops},
                           {"verify_concurrent", verify_concurrent}};
    doc["eval"] = json{{"parallelism", eval_parallelism}};
    doc["serve"] = json{{"addr", serve_addr}};
    return doc.dump(2);
}

std::string AppConfig::fingerprint() const {
    // api_key never participates, so rotating credentials does not invalidate
    // stored traces.
    return fnv1a64_hex(to_json());
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
    if (config.kind == "scripted") {
        return std::make_shared<ScriptedBackend>(config.scripted_dir);
    }
    if (config.kind == "wire") {
        return std::make_shared<WireBackend>(config.wire);
    }
    throw Error(ErrorCode::ConfigError, "unknown backend kind " + config.kind);
}

} // namespace factrag
