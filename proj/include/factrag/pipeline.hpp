#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "factrag/context.hpp"
#include "factrag/llm_gateway.hpp"
#include "factrag/prompt_engine.hpp"
#include "factrag/retriever.hpp"

namespace factrag {

enum class RationaleKind { explicit_statement, implicit_inference };

struct RationaleItem {
    std::vector<std::string> context_ids; // non-empty, all resolvable in the run Context
    std::string explanation;
    RationaleKind kind = RationaleKind::explicit_statement;
};

enum class VerificationLabel {
    correct_explicit,
    correct_implicit,
    correct_additional_info,
    incorrect_false_info,
    incorrect_deviating_info,
    incorrect_illogical,
};

enum class Verdict { correct, incorrect };

std::string_view label_name(VerificationLabel label);
std::optional<VerificationLabel> label_from_name(std::string_view name);

/// Verdict is a pure function of the label prefix.
Verdict verdict_for(VerificationLabel label);

struct VerificationStatement {
    std::vector<std::string> context_ids;
    VerificationLabel label = VerificationLabel::incorrect_illogical;
    Verdict verdict = Verdict::incorrect;
    std::string justification;
};

struct Citation {
    std::string identifier;
    std::string reason;
};

struct Answer {
    std::string text;
    std::vector<Citation> citations; // identifiers all within the run Context
    std::string mode;
};

enum class PipelineMode { none, rag, fe_direct, fe_no_verify, fe_triplets, fe_full };

std::string_view mode_name(PipelineMode mode);
PipelineMode mode_from_name(std::string_view name);

struct StageRecord {
    std::string stage;
    std::string system;
    std::string user;
    std::string completion;
    double latency_ms = 0.0;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    std::string backend_id;
};

/// Append-only record of one pipeline run; serialized as schema "trace_v1".
struct PipelineTrace {
    std::string run_id;
    std::string query;
    std::string mode;
    std::string config_fingerprint;
    std::string started_at;
    double total_latency_ms = 0.0;
    Context context;
    std::vector<StageRecord> stages;
    std::vector<RationaleItem> rationale;
    std::vector<VerificationStatement> verifications;
    std::vector<RationaleItem> refined_rationale;
    Answer answer;
    bool refiner_invoked = false;
    std::string error;

    std::string to_json() const;
    static PipelineTrace from_json(const std::string& text);
};

/// Line renderings shared by prompt bindings, parsers, and tests.
std::string render_rationale_lines(const std::vector<RationaleItem>& items);
std::string render_verification_lines(const std::vector<VerificationStatement>& statements);

struct PipelineConfig {
    RetrievalConfig retrieval;
    GenerationParams params;
    int refine_loops = 1; // 1..3; loops beyond the first re-verify the refined rationale
    bool verify_concurrent = false;
    std::string config_fingerprint;
    std::filesystem::path trace_dir; // empty disables persistence
};

/// Multi-stage engine: rationale generation over an identified context,
/// six-label verification, conditional refinement, and citation-grounded
/// answer generation; plus the direct baseline modes. The retriever may be
/// null when only non-retrieval modes are run.
class FePipeline {
public:
    FePipeline(const HybridRetriever* retriever, LlmGateway& gateway, const PromptEngine& prompts,
               PipelineConfig config);

    std::vector<RationaleItem> generate_rationale(const std::string& query, const Context& ctx,
                                                  PipelineTrace& trace);
    std::vector<VerificationStatement> verify_rationale(const std::string& query, const Context& ctx,
                                                        const std::vector<RationaleItem>& rationale,
                                                        PipelineTrace& trace);
    std::vector<RationaleItem> refine_rationale(const std::string& query, const Context& ctx,
                                                const std::vector<RationaleItem>& rationale,
                                                const std::vector<VerificationStatement>& verifications,
                                                PipelineTrace& trace);
    Answer generate_answer(const std::string& query, const std::vector<RationaleItem>& rationale,
                           const Context& ctx, PipelineTrace& trace);

    PipelineTrace run(const std::string& query, PipelineMode mode);

    /// Variant of run for callers that already hold a context (dataset
    /// evaluation); retrieval modes use it instead of the retriever.
    PipelineTrace run_with_context(const std::string& query, PipelineMode mode, const Context& ctx);

    const PipelineConfig& config() const { return config_; }

private:
    Context retrieve_for_mode(const std::string& query, PipelineMode mode);
    PipelineTrace run_impl(const std::string& query, PipelineMode mode,
                           const std::optional<Context>& provided);
    Answer run_none(const std::string& query, PipelineTrace& trace);
    Answer run_rag(const std::string& query, const Context& ctx, PipelineTrace& trace);
    Answer run_fe_direct(const std::string& query, const Context& ctx, PipelineTrace& trace);
    void persist_trace(const PipelineTrace& trace) const;

    CompletionResponse call(Stage stage, const RenderedPrompt& prompt, PipelineTrace& trace);

    const HybridRetriever* retriever_;
    LlmGateway& gateway_;
    const PromptEngine& prompts_;
    PipelineConfig config_;
};

} // namespace factrag
