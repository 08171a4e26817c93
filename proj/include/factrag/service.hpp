#pragma once

#include <filesystem>
#include <string>

#include "factrag/corpus_store.hpp"
#include "factrag/pipeline.hpp"

namespace httplib {
class Server;
}

namespace factrag {

/// Marks a store as being served (<root>/.serve.lock) so mutating commands
/// refuse to run against it; removed on destruction.
class ServeLock {
public:
    explicit ServeLock(const std::filesystem::path& root);
    ~ServeLock();
    ServeLock(const ServeLock&) = delete;
    ServeLock& operator=(const ServeLock&) = delete;

private:
    std::filesystem::path path_;
};

/// JSON HTTP front end over a pipeline and its trace directory.
///   POST /v1/query {question, mode?} -> {answer, citations, run_id, mode}
///   GET  /v1/trace/<run_id>          -> persisted trace, verbatim
///   GET  /healthz                    -> {ok, manifest_fingerprint, config_fingerprint}
/// Invalid bodies get 400, unknown traces 404, backend failures 503.
class HttpService {
public:
    HttpService(FePipeline& pipeline, const CorpusStore& store, std::filesystem::path trace_dir,
                std::string config_fingerprint, PipelineMode default_mode);
    ~HttpService();

    /// Blocks serving addr ("host:port") until stop(); false if binding fails.
    bool listen(const std::string& addr);

    /// Test hook: binds an ephemeral port on host and returns it; follow with
    /// serve_after_bind() on a worker thread.
    int bind_ephemeral(const std::string& host);
    bool serve_after_bind();
    void stop();

private:
    void route();

    FePipeline& pipeline_;
    const CorpusStore& store_;
    std::filesystem::path trace_dir_;
    std::string config_fingerprint_;
    PipelineMode default_mode_;
    ServeLock lock_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace factrag
