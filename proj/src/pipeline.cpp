#include "factrag/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>

#include <json.hpp>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"

using nlohmann::json;

namespace factrag {

namespace {

constexpr std::string_view kLabelNames[] = {
    "CORRECT-EXPLICIT",      "CORRECT-IMPLICIT",        "CORRECT-ADDITIONAL_INFO",
    "INCORRECT-FALSE_INFO",  "INCORRECT-DEVIATING_INFO", "INCORRECT-ILLOGICAL"};

constexpr std::string_view kModeNames[] = {"none",         "rag",         "fe_direct",
                                           "fe_no_verify", "fe_triplets", "fe_full"};

constexpr std::string_view kSeparator = " :: ";
constexpr std::string_view kImplicitMarker = "[IMPLICIT]";

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> nonempty_lines(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string line =
            trim(std::string_view(text).substr(pos, (nl == std::string::npos ? text.size() : nl) - pos));
        if (!line.empty()) out.push_back(line);
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return out;
}

std::vector<std::string> split_ids(std::string_view field) {
    std::vector<std::string> ids;
    std::size_t pos = 0;
    while (pos <= field.size()) {
        const std::size_t comma = field.find(',', pos);
        const std::string id =
            trim(field.substr(pos, (comma == std::string_view::npos ? field.size() : comma) - pos));
        if (!id.empty()) ids.push_back(id);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return ids;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string now_utc_iso8601() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string make_run_id(const std::string& query, PipelineMode mode) {
    static std::atomic<std::uint64_t> counter{0};
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    const auto nanos = std::chrono::duration_cast<std::chrono::nanoseconds>(now).count();
    std::string blob = query;
    blob += '\x1f';
    blob += mode_name(mode);
    blob += '\x1f';
    blob += std::to_string(nanos);
    blob += '\x1f';
    blob += std::to_string(counter.fetch_add(1));
    return fnv1a64_hex(blob);
}

/// Splits "<explanation>" into (kind, text), honoring the [IMPLICIT] marker.
std::pair<RationaleKind, std::string> parse_explanation(std::string explanation) {
    if (explanation.rfind(kImplicitMarker, 0) == 0) {
        std::string rest = trim(explanation.substr(kImplicitMarker.size()));
        return {RationaleKind::implicit_inference, std::move(rest)};
    }
    return {RationaleKind::explicit_statement, std::move(explanation)};
}

/// Parses "<ids> :: <explanation>" lines into a map keyed by each line's
/// first identifier. Lines without the separator are ignored; identifiers
/// outside the context are a hard failure.
std::map<std::string, RationaleItem> parse_rationale_map(const std::string& completion,
                                                         const Context& ctx) {
    std::map<std::string, RationaleItem> by_id;
    for (const std::string& line : nonempty_lines(completion)) {
        const std::size_t sep = line.find(kSeparator);
        if (sep == std::string::npos) continue;
        const std::vector<std::string> ids = split_ids(std::string_view(line).substr(0, sep));
        if (ids.empty()) continue;
        for (const std::string& id : ids) {
            if (!ctx.contains(id)) {
                throw Error(ErrorCode::ParseFailure,
                            "rationale line references identifier not in context: " + line);
            }
        }
        auto [kind, text] = parse_explanation(trim(line.substr(sep + kSeparator.size())));
        if (text.empty()) continue;
        RationaleItem item;
        item.context_ids = ids;
        item.explanation = std::move(text);
        item.kind = kind;
        by_id.emplace(ids.front(), std::move(item));
    }
    return by_id;
}

std::vector<Citation> parse_citation_lines(const std::vector<std::string>& lines,
                                           const Context& ctx) {
    std::vector<Citation> citations;
    for (const std::string& line : lines) {
        const std::size_t sep = line.find(kSeparator);
        Citation c;
        if (sep == std::string::npos) {
            c.identifier = trim(line);
        } else {
            c.identifier = trim(line.substr(0, sep));
            c.reason = trim(line.substr(sep + kSeparator.size()));
        }
        if (c.identifier.empty()) continue;
        if (!ctx.contains(c.identifier)) {
            throw Error(ErrorCode::CitationOutOfContext,
                        "citation outside the run context: " + c.identifier);
        }
        const bool dup = std::any_of(citations.begin(), citations.end(), [&](const Citation& prev) {
            return prev.identifier == c.identifier;
        });
        if (!dup) citations.push_back(std::move(c));
    }
    return citations;
}

json rationale_to_json(const std::vector<RationaleItem>& items) {
    json arr = json::array();
    for (const RationaleItem& item : items) {
        arr.push_back(json{{"context_ids", item.context_ids},
                           {"explanation", item.explanation},
                           {"kind", item.kind == RationaleKind::implicit_inference ? "implicit"
                                                                                   : "explicit"}});
    }
    return arr;
}

std::vector<RationaleItem> rationale_from_json(const json& arr) {
    std::vector<RationaleItem> items;
    for (const json& j : arr) {
        RationaleItem item;
        item.context_ids = j.at("context_ids").get<std::vector<std::string>>();
        item.explanation = j.at("explanation").get<std::string>();
        item.kind = j.value("kind", "explicit") == "implicit" ? RationaleKind::implicit_inference
                                                              : RationaleKind::explicit_statement;
        items.push_back(std::move(item));
    }
    return items;
}

} // namespace

std::string_view label_name(VerificationLabel label) {
    return kLabelNames[static_cast<int>(label)];
}

std::optional<VerificationLabel> label_from_name(std::string_view name) {
    for (int i = 0; i < 6; ++i) {
        if (kLabelNames[i] == name) return static_cast<VerificationLabel>(i);
    }
    return std::nullopt;
}

Verdict verdict_for(VerificationLabel label) {
    return label_name(label).rfind("CORRECT-", 0) == 0 ? Verdict::correct : Verdict::incorrect;
}

std::string_view mode_name(PipelineMode mode) { return kModeNames[static_cast<int>(mode)]; }

PipelineMode mode_from_name(std::string_view name) {
    for (int i = 0; i < 6; ++i) {
        if (kModeNames[i] == name) return static_cast<PipelineMode>(i);
    }
    throw Error(ErrorCode::ConfigError, "unknown pipeline mode: " + std::string(name));
}

std::string render_rationale_lines(const std::vector<RationaleItem>& items) {
    std::vector<std::string> lines;
    lines.reserve(items.size());
    for (const RationaleItem& item : items) {
        std::string line = join(item.context_ids, ",");
        line += kSeparator;
        if (item.kind == RationaleKind::implicit_inference) {
            line += kImplicitMarker;
            line += ' ';
        }
        line += item.explanation;
        lines.push_back(std::move(line));
    }
    return join(lines, "\n");
}

std::string render_verification_lines(const std::vector<VerificationStatement>& statements) {
    std::vector<std::string> lines;
    lines.reserve(statements.size());
    for (const VerificationStatement& s : statements) {
        std::string line = join(s.context_ids, ",");
        line += kSeparator;
        line += label_name(s.label);
        line += kSeparator;
        line += s.justification;
        lines.push_back(std::move(line));
    }
    return join(lines, "\n");
}

std::string PipelineTrace::to_json() const {
    json doc;
    doc["schema"] = "trace_v1";
    doc["run_id"] = run_id;
    doc["query"] = query;
    doc["mode"] = mode;
    doc["config_fingerprint"] = config_fingerprint;
    doc["started_at"] = started_at;
    doc["total_latency_ms"] = total_latency_ms;

    json ctx = json::array();
    for (const ContextItem& item : context.items) {
        ctx.push_back(json{{"id", item.id}, {"text", item.text}, {"kind", item_kind_name(item.kind)}});
    }
    doc["context"] = ctx;

    json stage_arr = json::array();
    for (const StageRecord& s : stages) {
        stage_arr.push_back(json{{"stage", s.stage},
                                 {"system", s.system},
                                 {"user", s.user},
                                 {"completion", s.completion},
                                 {"latency_ms", s.latency_ms},
                                 {"prompt_tokens", s.prompt_tokens},
                                 {"completion_tokens", s.completion_tokens},
                                 {"backend_id", s.backend_id}});
    }
    doc["stages"] = stage_arr;

    doc["rationale"] = rationale_to_json(rationale);

    json ver = json::array();
    for (const VerificationStatement& s : verifications) {
        ver.push_back(json{{"context_ids", s.context_ids},
                           {"label", label_name(s.label)},
                           {"verdict", s.verdict == Verdict::correct ? "CORRECT" : "INCORRECT"},
                           {"justification", s.justification}});
    }
    doc["verifications"] = ver;

    doc["refined_rationale"] = rationale_to_json(refined_rationale);

    json cits = json::array();
    for (const Citation& c : answer.citations) {
        cits.push_back(json{{"identifier", c.identifier}, {"reason", c.reason}});
    }
    doc["answer"] = json{{"text", answer.text}, {"citations", cits}, {"mode", answer.mode}};
    doc["refiner_invoked"] = refiner_invoked;
    doc["error"] = error;
    return doc.dump(2);
}

PipelineTrace PipelineTrace::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("bad trace JSON: ") + e.what());
    }
    PipelineTrace t;
    t.run_id = doc.value("run_id", "");
    t.query = doc.value("query", "");
    t.mode = doc.value("mode", "");
    t.config_fingerprint = doc.value("config_fingerprint", "");
    t.started_at = doc.value("started_at", "");
    t.total_latency_ms = doc.value("total_latency_ms", 0.0);
    for (const json& j : doc.value("context", json::array())) {
        ContextItem item;
        item.id = j.at("id").get<std::string>();
        item.text = j.at("text").get<std::string>();
        const std::string kind = j.value("kind", "paragraph");
        item.kind = kind == "triplet"  ? ItemKind::triplet
                    : kind == "web"    ? ItemKind::web
                                       : ItemKind::paragraph;
        t.context.items.push_back(std::move(item));
    }
    for (const json& j : doc.value("stages", json::array())) {
        StageRecord s;
        s.stage = j.value("stage", "");
        s.system = j.value("system", "");
        s.user = j.value("user", "");
        s.completion = j.value("completion", "");
        s.latency_ms = j.value("latency_ms", 0.0);
        s.prompt_tokens = j.value("prompt_tokens", 0);
        s.completion_tokens = j.value("completion_tokens", 0);
        s.backend_id = j.value("backend_id", "");
        t.stages.push_back(std::move(s));
    }
    t.rationale = rationale_from_json(doc.value("rationale", json::array()));
    for (const json& j : doc.value("verifications", json::array())) {
        VerificationStatement s;
        s.context_ids = j.at("context_ids").get<std::vector<std::string>>();
        s.label = label_from_name(j.at("label").get<std::string>())
                      .value_or(VerificationLabel::incorrect_illogical);
        s.verdict = verdict_for(s.label);
        s.justification = j.value("justification", "");
        t.verifications.push_back(std::move(s));
    }
    t.refined_rationale = rationale_from_json(doc.value("refined_rationale", json::array()));
    const json ans = doc.value("answer", json::object());
    t.answer.text = ans.value("text", "");
    t.answer.mode = ans.value("mode", "");
    for (const json& j : ans.value("citations", json::array())) {
        t.answer.citations.push_back({j.value("identifier", ""), j.value("reason", "")});
    }
    t.refiner_invoked = doc.value("refiner_invoked", false);
    t.error = doc.value("error", "");
    return t;
}

FePipeline::FePipeline(const HybridRetriever* retriever, LlmGateway& gateway,
                       const PromptEngine& prompts, PipelineConfig config)
    : retriever_(retriever), gateway_(gateway), prompts_(prompts), config_(std::move(config)) {
    if (config_.refine_loops < 1 || config_.refine_loops > 3) {
        throw Error(ErrorCode::ConfigError, "refine_loops must be 1..3, got " +
                                                std::to_string(config_.refine_loops));
    }
}

CompletionResponse FePipeline::call(Stage stage, const RenderedPrompt& prompt,
                                    PipelineTrace& trace) {
    CompletionRequest request;
    request.system = prompt.system;
    request.user = prompt.user;
    request.params = config_.params;
    request.stage = stage;
    CompletionResponse response = gateway_.complete(request);
    trace.stages.push_back(StageRecord{std::string(stage_name(stage)), prompt.system, prompt.user,
                                       response.text, response.latency_ms, response.prompt_tokens,
                                       response.completion_tokens, response.backend_id});
    return response;
}

std::vector<RationaleItem> FePipeline::generate_rationale(const std::string& query,
                                                          const Context& ctx,
                                                          PipelineTrace& trace) {
    if (ctx.empty()) {
        throw Error(ErrorCode::PreconditionViolation, "rationale generation needs a context");
    }
    const std::map<std::string, std::string> bindings = {
        {"query", query},
        {"context", ctx.rendered()},
        {"format_rules", std::string(stage_format_rules(Stage::rationale))}};
    const RenderedPrompt prompt = prompts_.render(Stage::rationale, bindings);

    std::map<std::string, RationaleItem> by_id = parse_rationale_map(call(Stage::rationale, prompt, trace).text, ctx);

    std::vector<std::string> missing;
    for (const ContextItem& item : ctx.items) {
        if (!by_id.count(item.id)) missing.push_back(item.id);
    }
    if (!missing.empty()) {
        RenderedPrompt retry = prompt;
        retry.user += "\n\nYour previous response omitted lines for: " + join(missing, ", ") +
                      ". Output one line for every context item in the required format.";
        for (auto& [id, item] : parse_rationale_map(call(Stage::rationale, retry, trace).text, ctx)) {
            by_id.emplace(id, std::move(item));
        }
    }

    std::vector<RationaleItem> out;
    out.reserve(ctx.size());
    for (const ContextItem& item : ctx.items) {
        auto it = by_id.find(item.id);
        if (it != by_id.end()) {
            out.push_back(it->second);
        } else {
            // Condemnable placeholder; the verifier labels it INCORRECT.
            out.push_back(RationaleItem{{item.id}, "NO RATIONALE PRODUCED",
                                        RationaleKind::implicit_inference});
        }
    }
    return out;
}

std::vector<VerificationStatement> FePipeline::verify_rationale(
    const std::string& query, const Context& ctx, const std::vector<RationaleItem>& rationale,
    PipelineTrace& trace) {
    if (rationale.empty()) {
        throw Error(ErrorCode::PreconditionViolation, "verification needs >= 1 rationale item");
    }

    auto parse_statements = [](const std::string& completion) {
        std::map<std::string, std::pair<std::string, std::string>> by_id; // id -> (label, justification)
        for (const std::string& line : nonempty_lines(completion)) {
            const std::size_t sep1 = line.find(kSeparator);
            if (sep1 == std::string::npos) continue;
            const std::size_t sep2 = line.find(kSeparator, sep1 + kSeparator.size());
            const std::vector<std::string> ids = split_ids(std::string_view(line).substr(0, sep1));
            if (ids.empty()) continue;
            std::string label, justification;
            if (sep2 == std::string::npos) {
                label = trim(line.substr(sep1 + kSeparator.size()));
            } else {
                label = trim(line.substr(sep1 + kSeparator.size(), sep2 - sep1 - kSeparator.size()));
                justification = trim(line.substr(sep2 + kSeparator.size()));
            }
            by_id.emplace(ids.front(), std::make_pair(std::move(label), std::move(justification)));
        }
        return by_id;
    };

    std::map<std::string, std::pair<std::string, std::string>> by_id;
    if (config_.verify_concurrent && rationale.size() > 1) {
        std::vector<CompletionRequest> requests;
        std::vector<RenderedPrompt> prompts;
        for (const RationaleItem& item : rationale) {
            const std::map<std::string, std::string> bindings = {
                {"query", query},
                {"context", ctx.rendered()},
                {"rationale", render_rationale_lines({item})},
                {"format_rules", std::string(stage_format_rules(Stage::verify))}};
            prompts.push_back(prompts_.render(Stage::verify, bindings));
            requests.push_back(CompletionRequest{prompts.back().system, prompts.back().user,
                                                 config_.params, Stage::verify});
        }
        const std::vector<CompletionOutcome> outcomes = gateway_.complete_concurrent(requests);
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            const CompletionOutcome& o = outcomes[i];
            if (!o.ok) throw Error(code_from_name(o.error_code), o.error_message);
            trace.stages.push_back(StageRecord{std::string(stage_name(Stage::verify)),
                                               prompts[i].system, prompts[i].user, o.response.text,
                                               o.response.latency_ms, o.response.prompt_tokens,
                                               o.response.completion_tokens, o.response.backend_id});
            for (auto& [id, parsed] : parse_statements(o.response.text)) {
                by_id.emplace(id, std::move(parsed));
            }
        }
    } else {
        const std::map<std::string, std::string> bindings = {
            {"query", query},
            {"context", ctx.rendered()},
            {"rationale", render_rationale_lines(rationale)},
            {"format_rules", std::string(stage_format_rules(Stage::verify))}};
        by_id = parse_statements(call(Stage::verify, prompts_.render(Stage::verify, bindings), trace).text);
    }

    std::vector<VerificationStatement> out;
    out.reserve(rationale.size());
    for (const RationaleItem& item : rationale) {
        VerificationStatement s;
        s.context_ids = item.context_ids;
        auto it = by_id.find(item.context_ids.front());
        const std::optional<VerificationLabel> label =
            it == by_id.end() ? std::nullopt : label_from_name(it->second.first);
        if (label) {
            s.label = *label;
            s.justification = it->second.second;
        } else {
            // Fail closed: anything unparseable is condemned.
            s.label = VerificationLabel::incorrect_illogical;
            s.justification = "UNPARSEABLE LABEL";
        }
        s.verdict = verdict_for(s.label);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<RationaleItem> FePipeline::refine_rationale(
    const std::string& query, const Context& ctx, const std::vector<RationaleItem>& rationale,
    const std::vector<VerificationStatement>& verifications, PipelineTrace& trace) {
    if (verifications.size() != rationale.size()) {
        throw Error(ErrorCode::PreconditionViolation,
                    "verifications must align one-to-one with rationale items");
    }
    std::vector<std::size_t> incorrect;
    for (std::size_t i = 0; i < verifications.size(); ++i) {
        if (verifications[i].verdict == Verdict::incorrect) incorrect.push_back(i);
    }
    if (incorrect.empty()) {
        throw Error(ErrorCode::PreconditionViolation,
                    "refinement called with no INCORRECT verdicts (skip rule)");
    }

    const std::map<std::string, std::string> bindings = {
        {"query", query},
        {"context", ctx.rendered()},
        {"rationale", render_rationale_lines(rationale)},
        {"verifications", render_verification_lines(verifications)},
        {"format_rules", std::string(stage_format_rules(Stage::refine))}};
    const RenderedPrompt prompt = prompts_.render(Stage::refine, bindings);

    std::map<std::string, RationaleItem> by_id = parse_rationale_map(call(Stage::refine, prompt, trace).text, ctx);

    std::vector<std::string> missing;
    for (const std::size_t i : incorrect) {
        if (!by_id.count(rationale[i].context_ids.front())) {
            missing.push_back(rationale[i].context_ids.front());
        }
    }
    if (!missing.empty()) {
        RenderedPrompt retry = prompt;
        retry.user += "\n\nYour previous response omitted corrected lines for: " +
                      join(missing, ", ") + ". Output one line for each in the required format.";
        for (auto& [id, item] : parse_rationale_map(call(Stage::refine, retry, trace).text, ctx)) {
            by_id.emplace(id, std::move(item));
        }
        missing.clear();
        for (const std::size_t i : incorrect) {
            if (!by_id.count(rationale[i].context_ids.front())) {
                missing.push_back(rationale[i].context_ids.front());
            }
        }
        if (!missing.empty()) {
            throw Error(ErrorCode::ParseFailure,
                        "refiner produced no corrected line for: " + join(missing, ", "));
        }
    }

    // CORRECT items pass through untouched; only INCORRECT indexes change.
    std::vector<RationaleItem> out = rationale;
    for (const std::size_t i : incorrect) {
        const RationaleItem& refined = by_id.at(rationale[i].context_ids.front());
        out[i].explanation = refined.explanation;
        out[i].kind = refined.kind;
    }
    return out;
}

Answer FePipeline::generate_answer(const std::string& query,
                                   const std::vector<RationaleItem>& rationale, const Context& ctx,
                                   PipelineTrace& trace) {
    if (rationale.empty()) {
        throw Error(ErrorCode::PreconditionViolation, "answer generation needs a rationale");
    }
    const std::map<std::string, std::string> bindings = {
        {"query", query},
        {"rationale", render_rationale_lines(rationale)},
        {"format_rules", std::string(stage_format_rules(Stage::answer))}};
    const RenderedPrompt prompt = prompts_.render(Stage::answer, bindings);

    auto try_parse = [&](const std::string& completion) -> std::optional<Answer> {
        std::vector<std::string> before;
        std::vector<std::string> after;
        bool seen_block = false;
        for (const std::string& line : nonempty_lines(completion)) {
            if (!seen_block && line == "CITATIONS:") {
                seen_block = true;
                continue;
            }
            (seen_block ? after : before).push_back(line);
        }
        if (!seen_block) return std::nullopt;
        Answer answer;
        answer.text = trim(join(before, "\n"));
        if (answer.text.empty()) return std::nullopt;
        answer.citations = parse_citation_lines(after, ctx);
        return answer;
    };

    std::optional<Answer> answer = try_parse(call(Stage::answer, prompt, trace).text);
    if (!answer) {
        RenderedPrompt retry = prompt;
        retry.user += "\n\nYour previous response was missing the answer text or the CITATIONS: "
                      "block. Follow the required format exactly.";
        answer = try_parse(call(Stage::answer, retry, trace).text);
    }
    if (!answer) {
        throw Error(ErrorCode::ParseFailure, "answer stage produced no parseable answer after retry");
    }
    return std::move(*answer);
}

Context FePipeline::retrieve_for_mode(const std::string& query, PipelineMode mode) {
    if (retriever_ == nullptr) {
        throw Error(ErrorCode::ConfigError,
                    "mode " + std::string(mode_name(mode)) + " needs a retriever");
    }
    const ContextShape shape =
        mode == PipelineMode::fe_triplets ? ContextShape::triplets : ContextShape::paragraphs;
    return retriever_->retrieve(query, config_.retrieval, shape).context;
}

Answer FePipeline::run_none(const std::string& query, PipelineTrace& trace) {
    RenderedPrompt prompt;
    prompt.system = "You answer questions accurately and concisely.";
    prompt.user = "Question: " + query + "\n\nAnswer the question.";
    Answer answer;
    answer.text = call(Stage::answer, prompt, trace).text;
    return answer;
}

Answer FePipeline::run_rag(const std::string& query, const Context& ctx, PipelineTrace& trace) {
    RenderedPrompt prompt;
    prompt.system = "You answer questions strictly from the provided context items.";
    prompt.user = "Question: " + query + "\n\nContext items:\n" + ctx.rendered() +
                  "\nAnswer the question using only the context items above.";
    Answer answer;
    answer.text = call(Stage::answer, prompt, trace).text;
    return answer;
}

Answer FePipeline::run_fe_direct(const std::string& query, const Context& ctx,
                                 PipelineTrace& trace) {
    RenderedPrompt prompt;
    prompt.system = "You produce an evidence rationale and an answer in a single response.";
    prompt.user =
        "Question: " + query + "\n\nContext items:\n" + ctx.rendered() +
        "\nFirst output one line per context item formatted as \"<identifier> :: <explanation>\". "
        "Then output a line reading exactly ANSWER: followed by the answer prose. Then output a "
        "line reading exactly CITATIONS: followed by one line per supporting item formatted as "
        "\"<identifier> :: <reason>\".";

    auto try_parse = [&](const std::string& completion) -> std::optional<Answer> {
        std::vector<std::string> rationale_lines;
        std::vector<std::string> answer_lines;
        std::vector<std::string> citation_lines;
        int section = 0;
        for (const std::string& line : nonempty_lines(completion)) {
            if (section == 0 && line == "ANSWER:") {
                section = 1;
                continue;
            }
            if (section <= 1 && line == "CITATIONS:") {
                section = 2;
                continue;
            }
            (section == 0 ? rationale_lines : section == 1 ? answer_lines : citation_lines)
                .push_back(line);
        }
        if (section < 2 || answer_lines.empty()) return std::nullopt;

        std::map<std::string, RationaleItem> by_id =
            parse_rationale_map(join(rationale_lines, "\n"), ctx);
        trace.rationale.clear();
        for (const ContextItem& item : ctx.items) {
            auto it = by_id.find(item.id);
            if (it != by_id.end()) {
                trace.rationale.push_back(it->second);
            } else {
                trace.rationale.push_back(RationaleItem{{item.id}, "NO RATIONALE PRODUCED",
                                                        RationaleKind::implicit_inference});
            }
        }
        trace.refined_rationale = trace.rationale;

        Answer answer;
        answer.text = trim(join(answer_lines, "\n"));
        answer.citations = parse_citation_lines(citation_lines, ctx);
        return answer;
    };

    std::optional<Answer> answer = try_parse(call(Stage::answer, prompt, trace).text);
    if (!answer) {
        RenderedPrompt retry = prompt;
        retry.user += "\n\nYour previous response was missing the ANSWER: or CITATIONS: marker. "
                      "Follow the required format exactly.";
        answer = try_parse(call(Stage::answer, retry, trace).text);
    }
    if (!answer) {
        throw Error(ErrorCode::ParseFailure,
                    "combined rationale+answer completion was unparseable after retry");
    }
    return std::move(*answer);
}

PipelineTrace FePipeline::run(const std::string& query, PipelineMode mode) {
    return run_impl(query, mode, std::nullopt);
}

PipelineTrace FePipeline::run_with_context(const std::string& query, PipelineMode mode,
                                           const Context& ctx) {
    return run_impl(query, mode, ctx);
}

PipelineTrace FePipeline::run_impl(const std::string& query, PipelineMode mode,
                                   const std::optional<Context>& provided) {
    PipelineTrace trace;
    trace.run_id = make_run_id(query, mode);
    trace.query = query;
    trace.mode = std::string(mode_name(mode));
    trace.config_fingerprint = config_.config_fingerprint;
    trace.started_at = now_utc_iso8601();
    const auto t0 = std::chrono::steady_clock::now();

    try {
        if (mode == PipelineMode::none) {
            trace.answer = run_none(query, trace);
        } else {
            trace.context = provided ? *provided : retrieve_for_mode(query, mode);
            switch (mode) {
            case PipelineMode::rag:
                trace.answer = run_rag(query, trace.context, trace);
                break;
            case PipelineMode::fe_direct:
                trace.answer = run_fe_direct(query, trace.context, trace);
                break;
            case PipelineMode::fe_no_verify: {
                trace.rationale = generate_rationale(query, trace.context, trace);
                trace.refined_rationale = trace.rationale;
                trace.answer = generate_answer(query, trace.rationale, trace.context, trace);
                break;
            }
            case PipelineMode::fe_triplets:
            case PipelineMode::fe_full: {
                trace.rationale = generate_rationale(query, trace.context, trace);
                std::vector<RationaleItem> current = trace.rationale;
                std::vector<VerificationStatement> verdicts =
                    verify_rationale(query, trace.context, current, trace);
                trace.verifications = verdicts;
                for (int loop = 0; loop < config_.refine_loops; ++loop) {
                    if (loop > 0) verdicts = verify_rationale(query, trace.context, current, trace);
                    const bool any_incorrect =
                        std::any_of(verdicts.begin(), verdicts.end(), [](const auto& v) {
                            return v.verdict == Verdict::incorrect;
                        });
                    if (!any_incorrect) break;
                    current = refine_rationale(query, trace.context, current, verdicts, trace);
                    trace.refiner_invoked = true;
                }
                trace.refined_rationale = current;
                trace.answer = generate_answer(query, current, trace.context, trace);
                break;
            }
            default:
                throw Error(ErrorCode::ConfigError, "unhandled mode");
            }
        }
        trace.answer.mode = trace.mode;
        trace.total_latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        persist_trace(trace);
        return trace;
    } catch (const Error& e) {
        trace.error = e.what();
        trace.total_latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        persist_trace(trace);
        // Rethrow with the failing run and stage attached so operator
        // surfaces can point at the persisted trace.
        const std::string stage = trace.stages.empty() ? "retrieve" : trace.stages.back().stage;
        std::string detail = e.what();
        const std::string prefix = std::string(code_name(e.code())) + ": ";
        if (detail.rfind(prefix, 0) == 0) detail = detail.substr(prefix.size());
        throw Error(e.code(), "run " + trace.run_id + " stage " + stage + ": " + detail,
                    e.transient());
    }
}

void FePipeline::persist_trace(const PipelineTrace& trace) const {
    if (config_.trace_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(config_.trace_dir, ec);
    const std::filesystem::path file = config_.trace_dir / (trace.run_id + ".json");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write trace " + file.string());
    out << trace.to_json() << '\n';
}

} // namespace factrag
