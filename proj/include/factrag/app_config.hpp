#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "factrag/corpus_store.hpp"
#include "factrag/llm_gateway.hpp"
#include "factrag/pipeline.hpp"
#include "factrag/retriever.hpp"

namespace factrag {

/// Completion backend selection: a scripted directory for deterministic runs
/// or a wire endpoint for live models.
struct BackendConfig {
    std::string kind = "scripted"; // "scripted" or "wire"
    std::filesystem::path scripted_dir;
    WireConfig wire;
};

struct EmbeddingConfig {
    std::size_t dim = 256;
    std::uint64_t seed = 0x5eed;
};

/// Whole-application configuration, loaded from one JSON file with
/// environment overrides. The fingerprint is recorded into every trace and
/// eval summary so outputs are attributable to an exact configuration.
struct AppConfig {
    std::filesystem::path store_root = "store";
    std::filesystem::path template_dir = "templates";
    std::filesystem::path trace_dir = "traces";
    std::filesystem::path web_fixture_dir;

    BackendConfig backend;
    BackendConfig judge; // defaults to backend when absent from the file

    EmbeddingConfig embedding;
    ChunkingConfig chunking;
    RetrievalConfig retrieval;
    GenerationParams params;
    GatewayConfig gateway;

    std::string default_mode = "fe_full";
    int refine_loops = 1;
    bool verify_concurrent = false;
    int eval_parallelism = 2;
    std::string serve_addr = "127.0.0.1:8080";

    /// Reads the file, resolves relative paths against its directory, applies
    /// LLM_ENDPOINT / LLM_API_KEY / LLM_MODEL / LLM_TIMEOUT_S overrides, and
    /// validates.
    static AppConfig load(const std::filesystem::path& path);

    void apply_env_overrides();
    void validate() const;

    /// Stable hash of the canonical JSON form with credentials excluded.
    std::string fingerprint() const;
    std::string to_json() const;
};

std::shared_ptr<Backend> make_backend(const BackendConfig& config);

} // namespace factrag
