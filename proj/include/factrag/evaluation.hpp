#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "factrag/pipeline.hpp"

namespace factrag {

struct Claim {
    std::string text; // non-empty
    bool supported = false;
    std::string justification;
};

struct FaithfulnessReport {
    double score = 0.0; // supported / total, in [0,1]
    std::vector<Claim> claims;
};

struct GradeReport {
    int score = 1; // 1..5
    Verdict verdict = Verdict::incorrect;
    std::string justification;
};

/// One dataset row: a question, the reference context it is answerable from,
/// and the reference answer. decision carries the dataset's categorical label
/// (yes/no/maybe) when present; it is informational only.
struct DatasetRecord {
    std::string id;
    std::string question;
    std::string context;
    std::string ground_truth;
    std::string decision;
};

struct EvalRecord {
    std::string id;
    std::string question;
    std::string context;
    std::string ground_truth;
    std::string decision;
    std::string mode;
    std::string answer;
    double faithfulness = 0.0;
    std::vector<Claim> claims;
    int grade_score = 0;
    std::string grade_verdict; // "CORRECT" or "INCORRECT"
    std::string grade_justification;
    std::string run_id;
    double latency_ms = 0.0;
    std::string error; // non-empty marks a failed record, excluded from the summary

    std::string to_json() const;
    static EvalRecord from_json(const std::string& line);
};

struct EvalSummary {
    double faithful_pct = 0.0;        // 100 * mean claim-level faithfulness
    double strict_faithful_pct = 0.0; // 100 * share of records with faithfulness == 1.0
    double grade_mean = 0.0;
    double accuracy_pct = 0.0; // 100 * share of CORRECT verdicts
    int n = 0;                 // completed records
    int n_failed = 0;
    std::string mode;
    std::string config_fingerprint;

    std::string to_json() const;
};

/// Accepts the expert-labeled JSON layout (object keyed by record id, or an
/// array) and generic JSONL, matching field names case-insensitively and
/// joining context arrays with blank lines.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);

std::vector<EvalRecord> load_eval_records(const std::filesystem::path& records_path);

/// Aggregates completed records; permutation-invariant over record order.
EvalSummary summarize(const std::vector<EvalRecord>& records, const std::string& mode,
                      const std::string& config_fingerprint);

/// Scores pipeline outputs with a judge backend: claim-level faithfulness and
/// a rubric grade with a binary verdict. The judge gateway may differ from the
/// generator gateway.
class Evaluator {
public:
    Evaluator(FePipeline& pipeline, LlmGateway& judge, const PromptEngine& prompts,
              int parallelism = 2);

    std::vector<Claim> extract_claims(const std::string& answer_text);
    FaithfulnessReport faithfulness(const std::string& question, const std::string& context_text,
                                    const std::string& answer_text);
    GradeReport auto_grade(const std::string& question, const std::string& context_text,
                           const std::string& ground_truth, const std::string& answer_text);

    /// Runs the pipeline per record, scores each, and writes
    /// <out_dir>/records.jsonl plus <out_dir>/summary.json. Records already in
    /// records.jsonl are skipped, so an interrupted run resumes. Per-record
    /// failures are recorded and excluded from the summary.
    EvalSummary evaluate_dataset(const std::filesystem::path& dataset_path, PipelineMode mode,
                                 const std::filesystem::path& out_dir);

    /// Builds the identified context a record is evaluated against: one item
    /// per context paragraph, ids PID-<record id>-<seq>.
    static Context context_for_record(const DatasetRecord& record);

private:
    CompletionResponse judge_call(Stage stage, const std::map<std::string, std::string>& bindings);

    FePipeline& pipeline_;
    LlmGateway& judge_;
    const PromptEngine& prompts_;
    int parallelism_;
};

} // namespace factrag
