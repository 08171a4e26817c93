#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "factrag/app_config.hpp"
#include "factrag/corpus_store.hpp"
#include "factrag/embedder.hpp"
#include "factrag/errors.hpp"
#include "factrag/evaluation.hpp"
#include "factrag/pipeline.hpp"
#include "factrag/retriever.hpp"
#include "factrag/service.hpp"
#include "factrag/web_search.hpp"

using nlohmann::json;

namespace {

int exit_code_for(factrag::ErrorCode code) {
    switch (code) {
    case factrag::ErrorCode::ConfigError:
    case factrag::ErrorCode::DatasetParseError:
    case factrag::ErrorCode::InvalidChunkConfig:
        return 2;
    default:
        return 1;
    }
}

void print_error(const factrag::Error& e) {
    const json doc{{"error", {{"code", factrag::code_name(e.code())}, {"message", e.what()}}}};
    std::cerr << doc.dump() << std::endl;
}

/// Everything a subcommand needs, built lazily so ingest does not demand a
/// reachable backend.
struct App {
    factrag::AppConfig cfg;
    std::unique_ptr<factrag::HashEmbedder> embedder;
    std::unique_ptr<factrag::CorpusStore> store;
    std::unique_ptr<factrag::PromptEngine> prompts;
    std::unique_ptr<factrag::LlmGateway> generator;
    std::unique_ptr<factrag::LlmGateway> judge;
    std::unique_ptr<factrag::WebProvider> web;
    std::unique_ptr<factrag::HybridRetriever> retriever;
    std::unique_ptr<factrag::FePipeline> pipeline;

    void open_store() {
        embedder = std::make_unique<factrag::HashEmbedder>(cfg.embedding.dim, cfg.embedding.seed);
        store = std::make_unique<factrag::CorpusStore>(cfg.store_root, cfg.chunking);
    }

    void build_pipeline(bool with_retriever) {
        open_store();
        prompts = std::make_unique<factrag::PromptEngine>(
            factrag::PromptEngine::load(cfg.template_dir));
        generator = std::make_unique<factrag::LlmGateway>(factrag::make_backend(cfg.backend),
                                                          cfg.gateway);
        judge = std::make_unique<factrag::LlmGateway>(factrag::make_backend(cfg.judge), cfg.gateway);
        if (with_retriever) {
            if (!cfg.web_fixture_dir.empty() && cfg.retrieval.web_k > 0) {
                web = std::make_unique<factrag::FixtureWebProvider>(cfg.web_fixture_dir);
            }
            retriever = std::make_unique<factrag::HybridRetriever>(*store, *embedder, web.get());
        }
        factrag::PipelineConfig pcfg;
        pcfg.retrieval = cfg.retrieval;
        pcfg.params = cfg.params;
        pcfg.refine_loops = cfg.refine_loops;
        pcfg.verify_concurrent = cfg.verify_concurrent;
        pcfg.config_fingerprint = cfg.fingerprint();
        pcfg.trace_dir = cfg.trace_dir;
        pipeline = std::make_unique<factrag::FePipeline>(retriever.get(), *generator, *prompts,
                                                         pcfg);
    }
};

int cmd_ingest(App& app, const std::vector<std::string>& paths) {
    app.open_store();
    json ids = json::array();
    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw factrag::Error(factrag::ErrorCode::IoError, "cannot read " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        factrag::Document doc;
        doc.doc_id = std::filesystem::path(path).stem().string();
        doc.title = doc.doc_id;
        doc.body = buf.str();
        ids.push_back(app.store->ingest_document(doc));
    }
    std::cout << json{{"ingested", ids.size()}, {"documents", ids}}.dump() << std::endl;
    return 0;
}

int cmd_index(App& app) {
    app.open_store();
    app.store->index_all(*app.embedder);
    const factrag::CorpusManifest& m = app.store->manifest();
    std::cout << json{{"documents", m.document_count},
                      {"chunks", m.chunk_count},
                      {"triplets", m.triplet_count},
                      {"fingerprint", m.fingerprint()}}
                     .dump()
              << std::endl;
    return 0;
}

int cmd_query(App& app, const std::string& question, const std::string& mode_str, bool show_trace,
              bool as_json) {
    const factrag::PipelineMode mode = factrag::mode_from_name(mode_str);
    app.build_pipeline(mode != factrag::PipelineMode::none);
    const factrag::PipelineTrace trace = app.pipeline->run(question, mode);

    if (as_json) {
        std::cout << trace.to_json() << std::endl;
        return 0;
    }
    std::cout << trace.answer.text << "\n";
    if (!trace.answer.citations.empty()) {
        std::cout << "\nCitations:\n";
        for (const factrag::Citation& c : trace.answer.citations) {
            std::cout << "  " << c.identifier << " — " << c.reason << "\n";
        }
    }
    if (show_trace) {
        std::cout << "\nRun " << trace.run_id << " (" << trace.mode << ", "
                  << trace.total_latency_ms << " ms)\n";
        std::cout << "Context:\n";
        for (const factrag::ContextItem& item : trace.context.items) {
            std::cout << "  " << factrag::Context::render_line(item) << "\n";
        }
        if (!trace.rationale.empty()) {
            std::cout << "Rationale:\n";
            std::istringstream lines(factrag::render_rationale_lines(trace.rationale));
            for (std::string line; std::getline(lines, line);) std::cout << "  " << line << "\n";
        }
        if (!trace.verifications.empty()) {
            std::cout << "Verification:\n";
            std::istringstream lines(factrag::render_verification_lines(trace.verifications));
            for (std::string line; std::getline(lines, line);) std::cout << "  " << line << "\n";
        }
        std::cout << "Refiner invoked: " << (trace.refiner_invoked ? "yes" : "no") << "\n";
        std::cout << "Stages:\n";
        for (const factrag::StageRecord& s : trace.stages) {
            std::cout << "  " << s.stage << " (" << s.backend_id << ", " << s.latency_ms
                      << " ms, " << s.prompt_tokens << "+" << s.completion_tokens << " tokens)\n";
        }
    }
    return 0;
}

int cmd_eval(App& app, const std::string& dataset, const std::string& mode_str,
             const std::string& out_dir) {
    app.build_pipeline(false);
    factrag::Evaluator evaluator(*app.pipeline, *app.judge, *app.prompts, app.cfg.eval_parallelism);

    std::vector<factrag::PipelineMode> modes;
    if (mode_str == "all") {
        modes = {factrag::PipelineMode::none,         factrag::PipelineMode::rag,
                 factrag::PipelineMode::fe_direct,    factrag::PipelineMode::fe_no_verify,
                 factrag::PipelineMode::fe_triplets,  factrag::PipelineMode::fe_full};
    } else {
        modes = {factrag::mode_from_name(mode_str)};
    }

    std::vector<factrag::EvalSummary> summaries;
    for (const factrag::PipelineMode mode : modes) {
        const std::filesystem::path out = modes.size() == 1
                                              ? std::filesystem::path(out_dir)
                                              : std::filesystem::path(out_dir) /
                                                    std::string(factrag::mode_name(mode));
        summaries.push_back(evaluator.evaluate_dataset(dataset, mode, out));
    }

    if (summaries.size() == 1) {
        std::cout << summaries.front().to_json() << std::endl;
    } else {
        std::printf("%-12s %12s %10s %12s %6s\n", "mode", "faithful_pct", "grade", "accuracy_pct",
                    "n");
        for (const factrag::EvalSummary& s : summaries) {
            std::printf("%-12s %12.2f %10.2f %12.2f %6d\n", s.mode.c_str(), s.faithful_pct,
                        s.grade_mean, s.accuracy_pct, s.n);
        }
    }
    return 0;
}

factrag::HttpService* g_service = nullptr;

void handle_signal(int) {
    if (g_service != nullptr) g_service->stop();
}

int cmd_serve(App& app, const std::string& addr) {
    app.build_pipeline(true);
    if (!app.store->manifest().sealed) {
        throw factrag::Error(factrag::ErrorCode::EmptyIndex,
                             "store is not indexed, run index before serve");
    }
    factrag::HttpService service(*app.pipeline, *app.store, app.cfg.trace_dir,
                                 app.cfg.fingerprint(),
                                 factrag::mode_from_name(app.cfg.default_mode));
    g_service = &service;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::cout << "serving on " << addr << std::endl;
    const bool ok = service.listen(addr);
    g_service = nullptr;
    if (!ok) {
        throw factrag::Error(factrag::ErrorCode::ConfigError, "cannot bind " + addr);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Retrieval and generation engine with rationale verification"};
    cli.require_subcommand(1);

    std::string config_path = "factrag.json";
    cli.add_option("--config", config_path, "Path to the JSON config file");

    auto* ingest = cli.add_subcommand("ingest", "Add documents to the corpus store");
    std::vector<std::string> ingest_paths;
    ingest->add_option("paths", ingest_paths, "Text files to ingest")->required();

    auto* index = cli.add_subcommand("index", "Build chunk, lexical, vector, and triplet indexes");

    auto* query = cli.add_subcommand("query", "Answer one question");
    std::string question, query_mode, eval_mode = "fe_full", dataset, out_dir = "eval_out";
    bool show_trace = false, as_json = false;
    query->add_option("question", question, "The question to answer")->required();
    query->add_option("--mode", query_mode, "Pipeline mode");
    query->add_flag("--show-trace", show_trace, "Print the stage-by-stage trace");
    query->add_flag("--json", as_json, "Print the full trace as JSON");

    auto* eval = cli.add_subcommand("eval", "Evaluate a dataset");
    eval->add_option("dataset", dataset, "Dataset JSON or JSONL file")->required();
    eval->add_option("--mode", eval_mode, "Pipeline mode, or 'all' for a comparison");
    eval->add_option("--out", out_dir, "Output directory");

    auto* serve = cli.add_subcommand("serve", "Run the HTTP JSON service");
    std::string addr;
    serve->add_option("--addr", addr, "host:port to listen on");

    CLI11_PARSE(cli, argc, argv);

    try {
        App app;
        app.cfg = factrag::AppConfig::load(config_path);
        if (query_mode.empty()) query_mode = app.cfg.default_mode;
        if (addr.empty()) addr = app.cfg.serve_addr;

        if (ingest->parsed()) return cmd_ingest(app, ingest_paths);
        if (index->parsed()) return cmd_index(app);
        if (query->parsed()) return cmd_query(app, question, query_mode, show_trace, as_json);
        if (eval->parsed()) return cmd_eval(app, dataset, eval_mode, out_dir);
        if (serve->parsed()) return cmd_serve(app, addr);
    } catch (const factrag::Error& e) {
        print_error(e);
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        const json doc{{"error", {{"code", "Unexpected"}, {"message", e.what()}}}};
        std::cerr << doc.dump() << std::endl;
        return 1;
    }
    return 0;
}
