#include "factrag/prompt_engine.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <vector>

#include "factrag/errors.hpp"

namespace factrag {

namespace {

const std::set<std::string>& known_placeholders() {
    static const std::set<std::string> names = {"query",        "context", "rationale",
                                                "verifications", "format_rules", "answer",
                                                "ground_truth", "claims"};
    return names;
}

/// Collects {name} placeholders; returns positions untouched. A brace pair
/// qualifies only when its body is entirely [a-z_].
std::set<std::string> scan_placeholders(std::string_view text) {
    std::set<std::string> found;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < text.size() && (std::islower(static_cast<unsigned char>(text[j])) || text[j] == '_')) {
            ++j;
        }
        if (j > i + 1 && j < text.size() && text[j] == '}') {
            found.insert(std::string(text.substr(i + 1, j - i - 1)));
            i = j + 1;
        } else {
            ++i;
        }
    }
    return found;
}

std::string substitute(std::string_view text, const std::map<std::string, std::string>& bindings,
                       Stage stage) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            out += text[i++];
            continue;
        }
        std::size_t j = i + 1;
        while (j < text.size() && (std::islower(static_cast<unsigned char>(text[j])) || text[j] == '_')) {
            ++j;
        }
        if (j > i + 1 && j < text.size() && text[j] == '}') {
            const std::string name(text.substr(i + 1, j - i - 1));
            auto it = bindings.find(name);
            if (it == bindings.end()) {
                throw Error(ErrorCode::MissingBinding, "stage " + std::string(stage_name(stage)) +
                                                           " needs a binding for {" + name + "}");
            }
            out += it->second;
            i = j + 1;
        } else {
            out += text[i++];
        }
    }
    return out;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

} // namespace

std::string_view stage_format_rules(Stage stage) {
    switch (stage) {
    case Stage::rationale:
        return "Output exactly one line per context item, in the listed order, formatted as\n"
               "<identifier> :: <explanation>\n"
               "using each identifier exactly as given. Begin the explanation with [IMPLICIT] when "
               "it rests on inference rather than an explicit statement. Output nothing else.";
    case Stage::verify:
        return "Output exactly one line per rationale statement, in the listed order, formatted as\n"
               "<identifier> :: <LABEL> :: <justification>\n"
               "where <LABEL> is one of CORRECT-EXPLICIT, CORRECT-IMPLICIT, CORRECT-ADDITIONAL_INFO, "
               "INCORRECT-FALSE_INFO, INCORRECT-DEVIATING_INFO, INCORRECT-ILLOGICAL. "
               "Output nothing else.";
    case Stage::refine:
        return "Output one line per statement judged INCORRECT, formatted as\n"
               "<identifier> :: <corrected explanation>\n"
               "Do not output lines for statements judged CORRECT. Output nothing else.";
    case Stage::answer:
        return "Write the answer as plain prose. Then output a line reading exactly\n"
               "CITATIONS:\n"
               "followed by one line per supporting item, formatted as\n"
               "<identifier> :: <reason this item supports the answer>\n"
               "citing only identifiers that appear in the rationale. Output nothing else.";
    case Stage::judge_claims:
        return "Output one atomic factual claim per line, with no numbering and no other text. "
               "If the answer makes no factual claim, output the single line NO CLAIMS.";
    case Stage::judge_faithful:
        return "Output exactly one line per claim, in the listed order, formatted as\n"
               "<claim number> :: <SUPPORTED|UNSUPPORTED> :: <justification>\n"
               "marking a claim SUPPORTED only if it can be inferred from the context alone. "
               "Output nothing else.";
    case Stage::judge_grade:
        return "Output exactly three lines:\n"
               "SCORE: <integer 1-5>\n"
               "VERDICT: <CORRECT|INCORRECT>\n"
               "WHY: <one-sentence justification>";
    }
    return "";
}

PromptEngine PromptEngine::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorCode::ConfigError, "template directory not found: " + dir.string());
    }
    PromptEngine engine;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error(ErrorCode::IoError, "cannot read " + file.string());
        std::string line;
        if (!std::getline(in, line)) {
            throw Error(ErrorCode::ConfigError, file.string() + ": empty template file");
        }
        line = strip_cr(line);
        const std::string prefix = "#stage: ";
        if (line.rfind(prefix, 0) != 0) {
            throw Error(ErrorCode::ConfigError, file.string() + ": first line must be '#stage: <tag>'");
        }
        const Stage stage = stage_from_name(line.substr(prefix.size()));
        if (engine.templates_.count(stage)) {
            throw Error(ErrorCode::ConfigError,
                        file.string() + ": duplicate template for stage " + line.substr(prefix.size()));
        }

        Template tmpl;
        std::string* part = &tmpl.system;
        bool separated = false;
        while (std::getline(in, line)) {
            line = strip_cr(line);
            if (!separated && line == "---") {
                separated = true;
                part = &tmpl.user;
                continue;
            }
            *part += line;
            *part += '\n';
        }
        if (!separated) {
            throw Error(ErrorCode::ConfigError, file.string() + ": missing '---' separator");
        }

        tmpl.placeholders = scan_placeholders(tmpl.system);
        for (const std::string& p : scan_placeholders(tmpl.user)) tmpl.placeholders.insert(p);
        for (const std::string& p : tmpl.placeholders) {
            if (!known_placeholders().count(p)) {
                throw Error(ErrorCode::UnknownPlaceholder, file.string() + ": unknown placeholder {" + p + "}");
            }
        }
        engine.templates_.emplace(stage, std::move(tmpl));
    }

    for (int i = 0; i < 7; ++i) {
        const Stage stage = static_cast<Stage>(i);
        if (!engine.templates_.count(stage)) {
            throw Error(ErrorCode::MissingStageTemplate,
                        "no template for stage " + std::string(stage_name(stage)));
        }
    }
    return engine;
}

RenderedPrompt PromptEngine::render(Stage stage,
                                    const std::map<std::string, std::string>& bindings) const {
    const Template& tmpl = templates_.at(stage);
    return RenderedPrompt{substitute(tmpl.system, bindings, stage),
                          substitute(tmpl.user, bindings, stage)};
}

const std::set<std::string>& PromptEngine::placeholders(Stage stage) const {
    return templates_.at(stage).placeholders;
}

} // namespace factrag
