#include "factrag/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"

using nlohmann::json;

namespace factrag {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> nonempty_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

/// Strips a leading "<n>." or "<n>)" list marker the judge may add.
std::string strip_list_marker(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
        return trim(line.substr(i + 1));
    }
    return line;
}

/// Case-insensitive field lookup over a JSON object; arrays of strings are
/// joined with blank lines so multi-paragraph contexts stay paragraphs.
std::optional<std::string> field(const json& obj, std::initializer_list<std::string_view> names) {
    for (const auto& [key, value] : obj.items()) {
        std::string lower = key;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        for (const std::string_view name : names) {
            if (lower != name) continue;
            if (value.is_string()) return value.get<std::string>();
            if (value.is_array()) {
                std::string joined;
                for (const json& part : value) {
                    if (!part.is_string()) return std::nullopt;
                    if (!joined.empty()) joined += "\n\n";
                    joined += part.get<std::string>();
                }
                return joined;
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

DatasetRecord record_from_json(const json& obj, const std::string& fallback_id) {
    if (!obj.is_object()) {
        throw Error(ErrorCode::DatasetParseError, "dataset record is not an object");
    }
    DatasetRecord rec;
    rec.id = field(obj, {"id"}).value_or(fallback_id);
    const auto question = field(obj, {"question"});
    const auto context = field(obj, {"context", "contexts"});
    const auto ground = field(obj, {"long_answer", "ground_truth"});
    if (!question || !context || !ground) {
        throw Error(ErrorCode::DatasetParseError,
                    "record " + rec.id + " is missing question/context/long_answer");
    }
    rec.question = *question;
    rec.context = *context;
    rec.ground_truth = *ground;
    rec.decision = field(obj, {"final_decision"}).value_or("");
    return rec;
}

double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double sum = 0.0;
    for (const double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

} // namespace

std::string EvalRecord::to_json() const {
    json claims_arr = json::array();
    for (const Claim& c : claims) {
        claims_arr.push_back(
            json{{"text", c.text}, {"supported", c.supported}, {"justification", c.justification}});
    }
    const json doc{{"id", id},
                   {"question", question},
                   {"context", context},
                   {"ground_truth", ground_truth},
                   {"decision", decision},
                   {"mode", mode},
                   {"answer", answer},
                   {"faithfulness", faithfulness},
                   {"claims", claims_arr},
                   {"grade_score", grade_score},
                   {"grade_verdict", grade_verdict},
                   {"grade_justification", grade_justification},
                   {"run_id", run_id},
                   {"latency_ms", latency_ms},
                   {"error", error}};
    return doc.dump();
}

EvalRecord EvalRecord::from_json(const std::string& line) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::DatasetParseError, std::string("bad record line: ") + e.what());
    }
    EvalRecord rec;
    rec.id = doc.value("id", "");
    rec.question = doc.value("question", "");
    rec.context = doc.value("context", "");
    rec.ground_truth = doc.value("ground_truth", "");
    rec.decision = doc.value("decision", "");
    rec.mode = doc.value("mode", "");
    rec.answer = doc.value("answer", "");
    rec.faithfulness = doc.value("faithfulness", 0.0);
    for (const json& j : doc.value("claims", json::array())) {
        rec.claims.push_back(
            {j.value("text", ""), j.value("supported", false), j.value("justification", "")});
    }
    rec.grade_score = doc.value("grade_score", 0);
    rec.grade_verdict = doc.value("grade_verdict", "");
    rec.grade_justification = doc.value("grade_justification", "");
    rec.run_id = doc.value("run_id", "");
    rec.latency_ms = doc.value("latency_ms", 0.0);
    rec.error = doc.value("error", "");
    return rec;
}

std::string EvalSummary::to_json() const {
    const json doc{{"faithful_pct", faithful_pct},
                   {"strict_faithful_pct", strict_faithful_pct},
                   {"grade_mean", grade_mean},
                   {"accuracy_pct", accuracy_pct},
                   {"n", n},
                   {"n_failed", n_failed},
                   {"mode", mode},
                   {"config_fingerprint", config_fingerprint}};
    return doc.dump(2);
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::DatasetParseError, "cannot open dataset " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::vector<DatasetRecord> records;
    const bool jsonl = path.extension() == ".jsonl";
    if (!jsonl) {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::DatasetParseError,
                        path.string() + " is not valid JSON: " + e.what());
        }
        if (doc.is_array()) {
            std::size_t idx = 0;
            for (const json& obj : doc) {
                records.push_back(record_from_json(obj, "r" + std::to_string(++idx)));
            }
        } else if (doc.is_object()) {
            const bool keyed = !doc.empty() &&
                               std::all_of(doc.begin(), doc.end(),
                                           [](const json& v) { return v.is_object(); });
            if (keyed) {
                for (const auto& [key, obj] : doc.items()) {
                    records.push_back(record_from_json(obj, key));
                }
            } else {
                records.push_back(record_from_json(doc, "r1"));
            }
        } else {
            throw Error(ErrorCode::DatasetParseError,
                        path.string() + " must hold an object or array of records");
        }
    } else {
        std::istringstream lines(text);
        std::string line;
        std::size_t idx = 0;
        while (std::getline(lines, line)) {
            if (trim(line).empty()) continue;
            json obj;
            try {
                obj = json::parse(line);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::DatasetParseError,
                            path.string() + " line " + std::to_string(idx + 1) + ": " + e.what());
            }
            records.push_back(record_from_json(obj, "r" + std::to_string(++idx)));
        }
    }
    if (records.empty()) {
        throw Error(ErrorCode::DatasetParseError, path.string() + " holds no records");
    }
    return records;
}

std::vector<EvalRecord> load_eval_records(const std::filesystem::path& records_path) {
    std::ifstream in(records_path, std::ios::binary);
    if (!in) return {};
    std::vector<EvalRecord> records;
    std::map<std::string, std::size_t> index_of;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        EvalRecord rec = EvalRecord::from_json(line);
        // A rerun may append a fresh row for a previously failed id; the
        // latest row wins.
        auto it = index_of.find(rec.id);
        if (it != index_of.end()) {
            records[it->second] = std::move(rec);
        } else {
            index_of.emplace(rec.id, records.size());
            records.push_back(std::move(rec));
        }
    }
    return records;
}

EvalSummary summarize(const std::vector<EvalRecord>& records, const std::string& mode,
                      const std::string& config_fingerprint) {
    EvalSummary summary;
    summary.mode = mode;
    summary.config_fingerprint = config_fingerprint;
    std::vector<double> faith;
    std::vector<double> grades;
    int strict = 0;
    int correct = 0;
    for (const EvalRecord& rec : records) {
        if (!rec.error.empty()) {
            ++summary.n_failed;
            continue;
        }
        faith.push_back(rec.faithfulness);
        grades.push_back(static_cast<double>(rec.grade_score));
        if (rec.faithfulness == 1.0) ++strict;
        if (rec.grade_verdict == "CORRECT") ++correct;
    }
    summary.n = static_cast<int>(faith.size());
    if (summary.n > 0) {
        summary.faithful_pct = 100.0 * mean(faith);
        summary.strict_faithful_pct = 100.0 * strict / summary.n;
        summary.grade_mean = mean(grades);
        summary.accuracy_pct = 100.0 * correct / summary.n;
    }
    return summary;
}

Evaluator::Evaluator(FePipeline& pipeline, LlmGateway& judge, const PromptEngine& prompts,
                     int parallelism)
    : pipeline_(pipeline), judge_(judge), prompts_(prompts), parallelism_(parallelism) {
    if (parallelism_ < 1) {
        throw Error(ErrorCode::ConfigError, "evaluation parallelism must be >= 1");
    }
}

CompletionResponse Evaluator::judge_call(Stage stage,
                                         const std::map<std::string, std::string>& bindings) {
    const RenderedPrompt prompt = prompts_.render(stage, bindings);
    CompletionRequest request;
    request.system = prompt.system;
    request.user = prompt.user;
    request.params = pipeline_.config().params;
    request.stage = stage;
    return judge_.complete(request);
}

std::vector<Claim> Evaluator::extract_claims(const std::string& answer_text) {
    if (trim(answer_text).empty()) {
        throw Error(ErrorCode::PreconditionViolation, "claim extraction needs a non-empty answer");
    }
    const CompletionResponse response = judge_call(
        Stage::judge_claims, {{"answer", answer_text},
                              {"format_rules", std::string(stage_format_rules(Stage::judge_claims))}});
    std::vector<Claim> claims;
    for (const std::string& line : nonempty_lines(response.text)) {
        if (line == "NO CLAIMS") break;
        const std::string text = strip_list_marker(line);
        if (!text.empty()) claims.push_back(Claim{text, false, ""});
    }
    if (claims.empty()) {
        throw Error(ErrorCode::EmptyClaimSet, "judge found no claims in the answer");
    }
    return claims;
}

FaithfulnessReport Evaluator::faithfulness(const std::string& question,
                                           const std::string& context_text,
                                           const std::string& answer_text) {
    (void)question; // claims are judged against the context alone
    if (trim(context_text).empty()) {
        throw Error(ErrorCode::PreconditionViolation, "faithfulness needs a non-empty context");
    }
    FaithfulnessReport report;
    report.claims = extract_claims(answer_text);

    std::string numbered;
    for (std::size_t i = 0; i < report.claims.size(); ++i) {
        numbered += std::to_string(i + 1) + ". " + report.claims[i].text + "\n";
    }
    const CompletionResponse response = judge_call(
        Stage::judge_faithful,
        {{"context", context_text},
         {"claims", numbered},
         {"format_rules", std::string(stage_format_rules(Stage::judge_faithful))}});

    for (const std::string& line : nonempty_lines(response.text)) {
        const std::size_t sep1 = line.find(" :: ");
        if (sep1 == std::string::npos) continue;
        const std::size_t sep2 = line.find(" :: ", sep1 + 4);
        char* end = nullptr;
        const long num = std::strtol(line.c_str(), &end, 10);
        if (end != line.c_str() + sep1 || num < 1 ||
            num > static_cast<long>(report.claims.size())) {
            continue;
        }
        Claim& claim = report.claims[static_cast<std::size_t>(num - 1)];
        const std::string verdict =
            trim(sep2 == std::string::npos ? line.substr(sep1 + 4)
                                           : line.substr(sep1 + 4, sep2 - sep1 - 4));
        claim.supported = verdict == "SUPPORTED";
        claim.justification = sep2 == std::string::npos ? "" : trim(line.substr(sep2 + 4));
    }
    // Claims the judge left unaddressed fail closed.
    std::size_t supported = 0;
    for (Claim& claim : report.claims) {
        if (claim.justification.empty() && !claim.supported) claim.justification = "NO VERDICT";
        if (claim.supported) ++supported;
    }
    report.score = static_cast<double>(supported) / static_cast<double>(report.claims.size());
    return report;
}

GradeReport Evaluator::auto_grade(const std::string& question, const std::string& context_text,
                                  const std::string& ground_truth, const std::string& answer_text) {
    if (trim(question).empty() || trim(context_text).empty() || trim(ground_truth).empty() ||
        trim(answer_text).empty()) {
        throw Error(ErrorCode::PreconditionViolation, "grading needs all four inputs non-empty");
    }
    const std::map<std::string, std::string> bindings = {
        {"query", question},
        {"context", context_text},
        {"ground_truth", ground_truth},
        {"answer", answer_text},
        {"format_rules", std::string(stage_format_rules(Stage::judge_grade))}};

    auto try_parse = [](const std::string& completion) -> std::optional<GradeReport> {
        std::optional<int> score;
        std::optional<Verdict> verdict;
        std::optional<std::string> why;
        for (const std::string& line : nonempty_lines(completion)) {
            if (line.rfind("SCORE:", 0) == 0) {
                const std::string value = trim(line.substr(6));
                char* end = nullptr;
                const long n = std::strtol(value.c_str(), &end, 10);
                if (end != value.c_str() + value.size() || n < 1 || n > 5) return std::nullopt;
                score = static_cast<int>(n);
            } else if (line.rfind("VERDICT:", 0) == 0) {
                const std::string value = trim(line.substr(8));
                if (value == "CORRECT") verdict = Verdict::correct;
                else if (value == "INCORRECT") verdict = Verdict::incorrect;
                else return std::nullopt;
            } else if (line.rfind("WHY:", 0) == 0) {
                why = trim(line.substr(4));
            }
        }
        if (!score || !verdict || !why) return std::nullopt;
        return GradeReport{*score, *verdict, *why};
    };

    const RenderedPrompt prompt = prompts_.render(Stage::judge_grade, bindings);
    CompletionRequest request{prompt.system, prompt.user, pipeline_.config().params,
                              Stage::judge_grade};
    std::optional<GradeReport> report = try_parse(judge_.complete(request).text);
    if (!report) {
        request.user += "\n\nYour previous response did not follow the required format. Output "
                        "exactly the three lines SCORE: / VERDICT: / WHY: with a score from 1 to 5.";
        report = try_parse(judge_.complete(request).text);
    }
    if (!report) {
        throw Error(ErrorCode::ParseFailure, "grade response unparseable or out of range after retry");
    }
    return *report;
}

Context Evaluator::context_for_record(const DatasetRecord& record) {
    Context ctx;
    std::size_t seq = 0;
    for (const TextSpan& span : split_paragraphs(record.context)) {
        ContextItem item;
        item.id = "PID-" + record.id + "-" + std::to_string(seq++);
        item.text = record.context.substr(span.begin, span.end - span.begin);
        item.kind = ItemKind::paragraph;
        ctx.items.push_back(std::move(item));
    }
    return ctx;
}

EvalSummary Evaluator::evaluate_dataset(const std::filesystem::path& dataset_path,
                                        PipelineMode mode, const std::filesystem::path& out_dir) {
    const std::vector<DatasetRecord> dataset = load_dataset(dataset_path);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path records_path = out_dir / "records.jsonl";

    std::map<std::string, EvalRecord> done;
    for (EvalRecord& rec : load_eval_records(records_path)) {
        if (rec.error.empty()) done.emplace(rec.id, std::move(rec));
    }

    std::vector<const DatasetRecord*> todo;
    for (const DatasetRecord& rec : dataset) {
        if (!done.count(rec.id)) todo.push_back(&rec);
    }

    std::ofstream out(records_path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + records_path.string());
    std::mutex write_mu;
    std::map<std::string, EvalRecord> fresh;
    std::atomic<std::size_t> next{0};

    auto evaluate_one = [&](const DatasetRecord& src) {
        EvalRecord rec;
        rec.id = src.id;
        rec.question = src.question;
        rec.context = src.context;
        rec.ground_truth = src.ground_truth;
        rec.decision = src.decision;
        rec.mode = std::string(mode_name(mode));
        try {
            const Context ctx = context_for_record(src);
            const PipelineTrace trace = pipeline_.run_with_context(src.question, mode, ctx);
            rec.answer = trace.answer.text;
            rec.run_id = trace.run_id;
            rec.latency_ms = trace.total_latency_ms;
            const std::string ctx_text = ctx.rendered();
            const FaithfulnessReport faith = faithfulness(src.question, ctx_text, rec.answer);
            rec.faithfulness = faith.score;
            rec.claims = faith.claims;
            const GradeReport grade = auto_grade(src.question, ctx_text, src.ground_truth, rec.answer);
            rec.grade_score = grade.score;
            rec.grade_verdict = grade.verdict == Verdict::correct ? "CORRECT" : "INCORRECT";
            rec.grade_justification = grade.justification;
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        std::lock_guard<std::mutex> lock(write_mu);
        out << rec.to_json() << '\n';
        out.flush();
        fresh.emplace(rec.id, std::move(rec));
    };

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            evaluate_one(*todo[i]);
        }
    };
    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(parallelism_), todo.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();

    std::vector<EvalRecord> all;
    all.reserve(dataset.size());
    for (const DatasetRecord& src : dataset) {
        if (auto hit = done.find(src.id); hit != done.end()) {
            all.push_back(hit->second);
        } else if (auto run = fresh.find(src.id); run != fresh.end()) {
            all.push_back(run->second);
        }
    }

    EvalSummary summary =
        summarize(all, std::string(mode_name(mode)), pipeline_.config().config_fingerprint);
    std::ofstream sum(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
    if (!sum) throw Error(ErrorCode::IoError, "cannot write summary.json");
    sum << summary.to_json() << '\n';
    return summary;
}

} // namespace factrag
