#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "factrag/errors.hpp"
#include "factrag/evaluation.hpp"

using namespace factrag;
namespace fs = std::filesystem;

namespace {

const fs::path kShippedTemplates = FACTRAG_TEMPLATE_DIR;

const PromptEngine& shipped_prompts() {
    static const PromptEngine engine = PromptEngine::load(kShippedTemplates);
    return engine;
}

fs::path write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    return path;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct EvalRig {
    std::shared_ptr<ScriptedBackend> generator = std::make_shared<ScriptedBackend>();
    std::shared_ptr<ScriptedBackend> judge_backend = std::make_shared<ScriptedBackend>();
    std::unique_ptr<LlmGateway> generator_gateway;
    std::unique_ptr<LlmGateway> judge_gateway;
    std::unique_ptr<FePipeline> pipeline;
    std::unique_ptr<Evaluator> evaluator;

    EvalRig() {
        GatewayConfig gc;
        gc.backoff_ms = 1;
        generator_gateway = std::make_unique<LlmGateway>(generator, gc);
        judge_gateway = std::make_unique<LlmGateway>(judge_backend, gc);
        PipelineConfig pc;
        pc.config_fingerprint = "eval-fp";
        pipeline = std::make_unique<FePipeline>(nullptr, *generator_gateway, shipped_prompts(), pc);
        evaluator = std::make_unique<Evaluator>(*pipeline, *judge_gateway, shipped_prompts(), 2);
    }
};

EvalRecord completed_record(const std::string& id, double faithfulness, int score,
                            const std::string& verdict) {
    EvalRecord rec;
    rec.id = id;
    rec.question = "q " + id;
    rec.mode = "rag";
    rec.answer = "answer " + id;
    rec.faithfulness = faithfulness;
    rec.grade_score = score;
    rec.grade_verdict = verdict;
    return rec;
}

} // namespace

TEST_CASE("claim extraction strips list markers and fails on empty sets") {
    EvalRig rig;
    rig.judge_backend->add_default(Stage::judge_claims,
                                   "1. Aspirin inhibits COX enzymes.\n"
                                   "2) It reduces fever.\n"
                                   "Unnumbered trailing claim.");
    const std::vector<Claim> claims = rig.evaluator->extract_claims("some answer");
    REQUIRE(claims.size() == 3);
    CHECK(claims[0].text == "Aspirin inhibits COX enzymes.");
    CHECK(claims[1].text == "It reduces fever.");
    CHECK(claims[2].text == "Unnumbered trailing claim.");
    for (const Claim& c : claims) {
        CHECK_FALSE(c.supported);
        CHECK(c.justification.empty());
    }

    EvalRig none;
    none.judge_backend->add_default(Stage::judge_claims, "NO CLAIMS");
    try {
        none.evaluator->extract_claims("I cannot answer that.");
        FAIL("expected EmptyClaimSet");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyClaimSet);
    }

    CHECK_THROWS_AS(rig.evaluator->extract_claims(""), Error);
    CHECK_THROWS_AS(rig.evaluator->extract_claims("   \n  "), Error);
}

TEST_CASE("faithfulness scores the supported share and fails closed") {
    EvalRig rig;
    rig.judge_backend->add_default(Stage::judge_claims, "1. First claim.\n2. Second claim.");

    SUBCASE("half supported") {
        rig.judge_backend->add_default(Stage::judge_faithful,
                                       "1 :: SUPPORTED :: stated verbatim\n"
                                       "2 :: UNSUPPORTED :: nowhere in the context");
        const FaithfulnessReport report =
            rig.evaluator->faithfulness("q", "context text", "answer");
        CHECK(report.score == 0.5);
        REQUIRE(report.claims.size() == 2);
        CHECK(report.claims[0].supported);
        CHECK(report.claims[0].justification == "stated verbatim");
        CHECK_FALSE(report.claims[1].supported);
        CHECK(report.claims[1].justification == "nowhere in the context");
    }

    SUBCASE("fully supported, justification optional") {
        rig.judge_backend->add_default(Stage::judge_faithful,
                                       "1 :: SUPPORTED :: explicit\n2 :: SUPPORTED");
        const FaithfulnessReport report =
            rig.evaluator->faithfulness("q", "context text", "answer");
        CHECK(report.score == 1.0);
        CHECK(report.claims[1].supported);
        CHECK(report.claims[1].justification.empty());
    }

    SUBCASE("unaddressed and malformed lines condemn the claim") {
        rig.judge_backend->add_default(Stage::judge_faithful,
                                       "1 :: SUPPORTED :: fine\n"
                                       "x :: SUPPORTED :: not a number\n"
                                       "9 :: SUPPORTED :: out of range");
        const FaithfulnessReport report =
            rig.evaluator->faithfulness("q", "context text", "answer");
        CHECK(report.score == 0.5);
        CHECK_FALSE(report.claims[1].supported);
        CHECK(report.claims[1].justification == "NO VERDICT");
    }

    SUBCASE("empty context is a precondition violation") {
        CHECK_THROWS_AS(rig.evaluator->faithfulness("q", "  ", "answer"), Error);
    }
}

TEST_CASE("auto grading parses the rubric, retries once, and never clamps") {
    SUBCASE("happy path") {
        EvalRig rig;
        rig.judge_backend->add_default(Stage::judge_grade,
                                       "SCORE: 4\nVERDICT: CORRECT\nWHY: matches the reference.");
        const GradeReport report = rig.evaluator->auto_grade("q", "ctx", "truth", "answer");
        CHECK(report.score == 4);
        CHECK(report.verdict == Verdict::correct);
        CHECK(report.justification == "matches the reference.");
        CHECK(rig.judge_backend->calls_for(Stage::judge_grade) == 1);
    }

    SUBCASE("malformed first response recovers on retry") {
        EvalRig rig;
        rig.judge_backend->add_rule(Stage::judge_grade, [](const CompletionRequest& r) -> std::optional<std::string> {
            if (r.user.find("did not follow the required format") != std::string::npos) {
                return "SCORE: 2\nVERDICT: INCORRECT\nWHY: contradicts the reference.";
            }
            return "SCORE: seven\nVERDICT: CORRECT\nWHY: w";
        });
        const GradeReport report = rig.evaluator->auto_grade("q", "ctx", "truth", "answer");
        CHECK(report.score == 2);
        CHECK(report.verdict == Verdict::incorrect);
        CHECK(rig.judge_backend->calls_for(Stage::judge_grade) == 2);
    }

    SUBCASE("out-of-range scores are rejected, not clamped") {
        for (const char* bad : {"SCORE: 7", "SCORE: 0", "SCORE: -3", "SCORE: 4.5"}) {
            CAPTURE(bad);
            EvalRig rig;
            rig.judge_backend->add_default(
                Stage::judge_grade, std::string(bad) + "\nVERDICT: CORRECT\nWHY: over-eager.");
            try {
                rig.evaluator->auto_grade("q", "ctx", "truth", "answer");
                FAIL("expected ParseFailure");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::ParseFailure);
            }
        }
    }

    SUBCASE("missing lines and unknown verdicts fail after the retry") {
        for (const char* bad :
             {"SCORE: 3\nVERDICT: CORRECT", "SCORE: 3\nWHY: no verdict line",
              "VERDICT: CORRECT\nWHY: no score", "SCORE: 3\nVERDICT: MAYBE\nWHY: fence sitter"}) {
            CAPTURE(bad);
            EvalRig rig;
            rig.judge_backend->add_default(Stage::judge_grade, bad);
            CHECK_THROWS_AS(rig.evaluator->auto_grade("q", "ctx", "truth", "answer"), Error);
            CHECK(rig.judge_backend->calls_for(Stage::judge_grade) == 2);
        }
    }

    SUBCASE("boundary scores 1 and 5 are accepted") {
        for (const int score : {1, 5}) {
            EvalRig rig;
            rig.judge_backend->add_default(Stage::judge_grade,
                                           "SCORE: " + std::to_string(score) +
                                               "\nVERDICT: INCORRECT\nWHY: boundary.");
            CHECK(rig.evaluator->auto_grade("q", "ctx", "truth", "answer").score == score);
        }
    }

    SUBCASE("all four inputs must be non-empty") {
        EvalRig rig;
        CHECK_THROWS_AS(rig.evaluator->auto_grade("", "ctx", "truth", "answer"), Error);
        CHECK_THROWS_AS(rig.evaluator->auto_grade("q", "", "truth", "answer"), Error);
        CHECK_THROWS_AS(rig.evaluator->auto_grade("q", "ctx", "", "answer"), Error);
        CHECK_THROWS_AS(rig.evaluator->auto_grade("q", "ctx", "truth", ""), Error);
        CHECK(rig.judge_backend->calls() == 0);
    }
}

TEST_CASE("evaluator rejects non-positive parallelism") {
    EvalRig rig;
    CHECK_THROWS_AS(Evaluator(*rig.pipeline, *rig.judge_gateway, shipped_prompts(), 0), Error);
}

TEST_CASE("dataset loading accepts keyed, array, and line-delimited layouts") {
    const fs::path dir = fs::temp_directory_path() / "factrag_eval_ds";
    fs::remove_all(dir);

    SUBCASE("keyed object with upper-case fields and context arrays") {
        const fs::path path = write_file(dir / "keyed.json", R"({
            "21645374": {
                "QUESTION": "Does aspirin reduce fever?",
                "CONTEXTS": ["Paragraph one.", "Paragraph two."],
                "LONG_ANSWER": "Yes, aspirin is antipyretic.",
                "final_decision": "yes"
            },
            "9488747": {
                "QUESTION": "Second question?",
                "CONTEXTS": ["Only paragraph."],
                "LONG_ANSWER": "Second answer.",
                "final_decision": "no"
            }
        })");
        std::vector<DatasetRecord> records = load_dataset(path);
        REQUIRE(records.size() == 2);
        std::sort(records.begin(), records.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        CHECK(records[0].id == "21645374");
        CHECK(records[0].question == "Does aspirin reduce fever?");
        CHECK(records[0].context == "Paragraph one.\n\nParagraph two.");
        CHECK(records[0].ground_truth == "Yes, aspirin is antipyretic.");
        CHECK(records[0].decision == "yes");
        CHECK(records[1].id == "9488747");
    }

    SUBCASE("array layout with fallback identifiers") {
        const fs::path path = write_file(dir / "array.json", R"([
            {"question": "q1", "context": "c1", "ground_truth": "g1"},
            {"id": "named", "question": "q2", "context": "c2", "ground_truth": "g2"}
        ])");
        const std::vector<DatasetRecord> records = load_dataset(path);
        REQUIRE(records.size() == 2);
        CHECK(records[0].id == "r1");
        CHECK(records[0].ground_truth == "g1");
        CHECK(records[1].id == "named");
        CHECK(records[1].decision.empty());
    }

    SUBCASE("single record object") {
        const fs::path path = write_file(
            dir / "single.json", R"({"question": "q", "context": "c", "long_answer": "g"})");
        const std::vector<DatasetRecord> records = load_dataset(path);
        REQUIRE(records.size() == 1);
        CHECK(records[0].id == "r1");
    }

    SUBCASE("line-delimited records skip blank lines") {
        const fs::path path = write_file(dir / "rows.jsonl",
                                         "{\"question\": \"q1\", \"context\": \"c1\", "
                                         "\"ground_truth\": \"g1\"}\n"
                                         "\n"
                                         "{\"question\": \"q2\", \"context\": \"c2\", "
                                         "\"ground_truth\": \"g2\"}\n");
        const std::vector<DatasetRecord> records = load_dataset(path);
        REQUIRE(records.size() == 2);
        CHECK(records[0].id == "r1");
        CHECK(records[1].id == "r2");
    }

    SUBCASE("malformed inputs raise dataset parse errors") {
        const std::vector<std::pair<std::string, std::string>> cases = {
            {"missing.json", R"([{"question": "q", "context": "c"}])"},
            {"badjson.json", "{not json"},
            {"badline.jsonl", "{bad line}\n"},
            {"scalar.json", "42"},
            {"empty.json", "[]"},
            {"blank.jsonl", "\n\n"},
        };
        for (const auto& [name, text] : cases) {
            CAPTURE(name);
            const fs::path path = write_file(dir / name, text);
            try {
                load_dataset(path);
                FAIL("expected DatasetParseError");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::DatasetParseError);
            }
        }
        CHECK_THROWS_AS(load_dataset(dir / "nonexistent.json"), Error);
    }
}

TEST_CASE("record context construction splits paragraphs under record-scoped ids") {
    DatasetRecord rec;
    rec.id = "rec7";
    rec.context = "Para one text.\n\nPara two text.";
    const Context ctx = Evaluator::context_for_record(rec);
    REQUIRE(ctx.items.size() == 2);
    CHECK(ctx.items[0].id == "PID-rec7-0");
    CHECK(ctx.items[0].text == "Para one text.");
    CHECK(ctx.items[0].kind == ItemKind::paragraph);
    CHECK(ctx.items[1].id == "PID-rec7-1");
    CHECK(ctx.items[1].text == "Para two text.");
}

TEST_CASE("eval records round-trip through JSON lines") {
    EvalRecord rec = completed_record("id9", 0.75, 4, "CORRECT");
    rec.claims = {{"claim a", true, "fine"}, {"claim b", false, "NO VERDICT"}};
    rec.grade_justification = "mostly right";
    rec.run_id = "abc123";
    rec.latency_ms = 42.5;
    rec.decision = "yes";
    rec.context = "ctx";
    rec.ground_truth = "truth";

    const EvalRecord back = EvalRecord::from_json(rec.to_json());
    CHECK(back.id == rec.id);
    CHECK(back.question == rec.question);
    CHECK(back.context == rec.context);
    CHECK(back.ground_truth == rec.ground_truth);
    CHECK(back.decision == rec.decision);
    CHECK(back.mode == rec.mode);
    CHECK(back.answer == rec.answer);
    CHECK(back.faithfulness == rec.faithfulness);
    REQUIRE(back.claims.size() == 2);
    CHECK(back.claims[0].text == "claim a");
    CHECK(back.claims[0].supported);
    CHECK(back.claims[1].justification == "NO VERDICT");
    CHECK(back.grade_score == rec.grade_score);
    CHECK(back.grade_verdict == rec.grade_verdict);
    CHECK(back.grade_justification == rec.grade_justification);
    CHECK(back.run_id == rec.run_id);
    CHECK(back.latency_ms == rec.latency_ms);
    CHECK(back.error.empty());

    CHECK_THROWS_AS(EvalRecord::from_json("{oops"), Error);
}

TEST_CASE("loading eval records keeps first-seen order with last row winning") {
    const fs::path dir = fs::temp_directory_path() / "factrag_eval_records";
    fs::remove_all(dir);

    EvalRecord a_failed = completed_record("a", 0.0, 0, "");
    a_failed.error = "boom";
    const EvalRecord b = completed_record("b", 1.0, 5, "CORRECT");
    const EvalRecord a_fixed = completed_record("a", 0.5, 3, "INCORRECT");

    const fs::path path = write_file(dir / "records.jsonl", a_failed.to_json() + "\n" +
                                                                b.to_json() + "\n" +
                                                                a_fixed.to_json() + "\n");
    const std::vector<EvalRecord> records = load_eval_records(path);
    REQUIRE(records.size() == 2);
    CHECK(records[0].id == "a");
    CHECK(records[0].error.empty());
    CHECK(records[0].faithfulness == 0.5);
    CHECK(records[1].id == "b");

    CHECK(load_eval_records(dir / "missing.jsonl").empty());
}

TEST_CASE("summaries aggregate completed records and are order-invariant") {
    std::vector<EvalRecord> records = {
        completed_record("a", 0.5, 3, "CORRECT"),
        completed_record("b", 1.0, 5, "CORRECT"),
        completed_record("c", 0.75, 4, "INCORRECT"),
    };
    EvalRecord failed = completed_record("d", 0.0, 0, "");
    failed.error = "pipeline exploded";
    records.push_back(failed);

    const EvalSummary summary = summarize(records, "rag", "fp1");
    CHECK(summary.n == 3);
    CHECK(summary.n_failed == 1);
    CHECK(summary.faithful_pct == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(summary.strict_faithful_pct == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
    CHECK(summary.grade_mean == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(summary.accuracy_pct == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
    CHECK(summary.mode == "rag");
    CHECK(summary.config_fingerprint == "fp1");

    std::mt19937 rng(7);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(records.begin(), records.end(), rng);
        const EvalSummary again = summarize(records, "rag", "fp1");
        CHECK(again.faithful_pct == doctest::Approx(summary.faithful_pct).epsilon(1e-12));
        CHECK(again.strict_faithful_pct ==
              doctest::Approx(summary.strict_faithful_pct).epsilon(1e-12));
        CHECK(again.grade_mean == doctest::Approx(summary.grade_mean).epsilon(1e-12));
        CHECK(again.accuracy_pct == doctest::Approx(summary.accuracy_pct).epsilon(1e-12));
        CHECK(again.n == summary.n);
        CHECK(again.n_failed == summary.n_failed);
    }

    const EvalSummary empty = summarize({}, "rag", "fp1");
    CHECK(empty.n == 0);
    CHECK(empty.faithful_pct == 0.0);
    CHECK(empty.grade_mean == 0.0);
}

namespace {

// Judge rules for dataset-level runs: two claims per answer, both supported,
// with the grade keyed to the question text.
void install_judge_rules(ScriptedBackend& judge, const std::string& incorrect_marker) {
    judge.add_default(Stage::judge_claims, "1. First claim.\n2. Second claim.");
    judge.add_default(Stage::judge_faithful,
                      "1 :: SUPPORTED :: in context\n2 :: SUPPORTED :: in context");
    judge.add_rule(Stage::judge_grade, [incorrect_marker](const CompletionRequest& r) -> std::optional<std::string> {
        if (!incorrect_marker.empty() && r.user.find(incorrect_marker) != std::string::npos) {
            return "SCORE: 2\nVERDICT: INCORRECT\nWHY: misses the reference.";
        }
        return "SCORE: 4\nVERDICT: CORRECT\nWHY: matches the reference.";
    });
}

fs::path write_three_record_dataset(const fs::path& path) {
    return write_file(path, R"([
        {"id": "A1", "question": "QALPHA what does aspirin inhibit?",
         "context": "Aspirin inhibits COX enzymes.", "ground_truth": "COX enzymes."},
        {"id": "B2", "question": "QBETA what reduces fever?",
         "context": "Antipyretics reduce fever.", "ground_truth": "Antipyretics."},
        {"id": "C3", "question": "QGAMMA what is a statin for?",
         "context": "Statins lower cholesterol.", "ground_truth": "Lowering cholesterol."}
    ])");
}

} // namespace

TEST_CASE("dataset evaluation writes resumable records and a matching summary") {
    const fs::path dir = fs::temp_directory_path() / "factrag_eval_run";
    fs::remove_all(dir);
    const fs::path dataset = write_three_record_dataset(dir / "dataset.json");
    const fs::path out_dir = dir / "out";

    EvalRig rig;
    rig.generator->add_default(Stage::answer, "The context answers the question.");
    install_judge_rules(*rig.judge_backend, "QGAMMA");

    const EvalSummary summary =
        rig.evaluator->evaluate_dataset(dataset, PipelineMode::rag, out_dir);

    CHECK(summary.n == 3);
    CHECK(summary.n_failed == 0);
    CHECK(summary.faithful_pct == doctest::Approx(100.0));
    CHECK(summary.strict_faithful_pct == doctest::Approx(100.0));
    CHECK(summary.grade_mean == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
    CHECK(summary.accuracy_pct == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
    CHECK(summary.mode == "rag");
    CHECK(summary.config_fingerprint == "eval-fp");

    // The persisted rows reproduce the summary exactly.
    const std::vector<EvalRecord> rows = load_eval_records(out_dir / "records.jsonl");
    REQUIRE(rows.size() == 3);
    const EvalSummary recomputed = summarize(rows, "rag", "eval-fp");
    CHECK(read_file(out_dir / "summary.json") == recomputed.to_json() + "\n");
    CHECK(recomputed.to_json() == summary.to_json());

    for (const EvalRecord& row : rows) {
        CAPTURE(row.id);
        CHECK(row.error.empty());
        CHECK(row.answer == "The context answers the question.");
        CHECK(row.claims.size() == 2);
        CHECK_FALSE(row.run_id.empty());
        CHECK(row.mode == "rag");
    }
    CHECK(rows[2].grade_verdict == "INCORRECT");

    // One pipeline call and three judge calls per record.
    CHECK(rig.generator->calls_for(Stage::answer) == 3);
    CHECK(rig.judge_backend->calls_for(Stage::judge_claims) == 3);
    CHECK(rig.judge_backend->calls_for(Stage::judge_faithful) == 3);
    CHECK(rig.judge_backend->calls_for(Stage::judge_grade) == 3);
}

TEST_CASE("a rerun over an existing records file evaluates only the missing rows") {
    const fs::path dir = fs::temp_directory_path() / "factrag_eval_resume";
    fs::remove_all(dir);
    const fs::path full = write_three_record_dataset(dir / "full.json");
    const fs::path subset = write_file(dir / "subset.json", R"([
        {"id": "A1", "question": "QALPHA what does aspirin inhibit?",
         "context": "Aspirin inhibits COX enzymes.", "ground_truth": "COX enzymes."},
        {"id": "B2", "question": "QBETA what reduces fever?",
         "context": "Antipyretics reduce fever.", "ground_truth": "Antipyretics."}
    ])");
    const fs::path out_dir = dir / "out";

    EvalRig first;
    first.generator->add_default(Stage::answer, "Answer text.");
    install_judge_rules(*first.judge_backend, "");
    first.evaluator->evaluate_dataset(subset, PipelineMode::rag, out_dir);
    CHECK(first.generator->calls_for(Stage::answer) == 2);

    EvalRig second;
    second.generator->add_default(Stage::answer, "Answer text.");
    install_judge_rules(*second.judge_backend, "");
    const EvalSummary summary = second.evaluator->evaluate_dataset(full, PipelineMode::rag, out_dir);

    // Only the record absent from records.jsonl was run.
    CHECK(second.generator->calls_for(Stage::answer) == 1);
    CHECK(summary.n == 3);
    CHECK(summary.n_failed == 0);
    CHECK(load_eval_records(out_dir / "records.jsonl").size() == 3);
}

TEST_CASE("failed records are recorded, excluded, and retried on rerun") {
    const fs::path dir = fs::temp_directory_path() / "factrag_eval_retry";
    fs::remove_all(dir);
    const fs::path dataset = write_file(dir / "ds.json", R"([
        {"id": "G1", "question": "QGOOD fine question?",
         "context": "Good context.", "ground_truth": "Good truth."},
        {"id": "F1", "question": "QFAIL doomed question?",
         "context": "Doomed context.", "ground_truth": "Doomed truth."}
    ])");
    const fs::path out_dir = dir / "out";

    EvalRig broken;
    broken.generator->add_default(Stage::answer, "Answer text.");
    broken.judge_backend->add_default(Stage::judge_claims, "1. First claim.\n2. Second claim.");
    broken.judge_backend->add_default(Stage::judge_faithful,
                                      "1 :: SUPPORTED :: ok\n2 :: SUPPORTED :: ok");
    broken.judge_backend->add_rule(Stage::judge_grade, [](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.user.find("QFAIL") != std::string::npos) return "SCORE: banana";
        return "SCORE: 4\nVERDICT: CORRECT\nWHY: fine.";
    });
    const EvalSummary partial = broken.evaluator->evaluate_dataset(dataset, PipelineMode::rag, out_dir);
    CHECK(partial.n == 1);
    CHECK(partial.n_failed == 1);
    {
        const std::vector<EvalRecord> rows = load_eval_records(out_dir / "records.jsonl");
        REQUIRE(rows.size() == 2);
        const auto failed = std::find_if(rows.begin(), rows.end(),
                                         [](const EvalRecord& r) { return r.id == "F1"; });
        REQUIRE(failed != rows.end());
        CHECK(failed->error.find("ParseFailure") != std::string::npos);
    }

    EvalRig fixed;
    fixed.generator->add_default(Stage::answer, "Answer text.");
    install_judge_rules(*fixed.judge_backend, "");
    const EvalSummary healed = fixed.evaluator->evaluate_dataset(dataset, PipelineMode::rag, out_dir);

    // Only the failed record reran; its fresh row replaces the failed one.
    CHECK(fixed.generator->calls_for(Stage::answer) == 1);
    CHECK(healed.n == 2);
    CHECK(healed.n_failed == 0);
    const std::vector<EvalRecord> rows = load_eval_records(out_dir / "records.jsonl");
    REQUIRE(rows.size() == 2);
    for (const EvalRecord& row : rows) CHECK(row.error.empty());
}
