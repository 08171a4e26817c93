#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "factrag/llm_gateway.hpp"

namespace factrag {

struct RenderedPrompt {
    std::string system;
    std::string user;
};

/// Machine-parseable output contract injected into each stage template via
/// {format_rules}; the pipeline parsers depend on these exact shapes.
std::string_view stage_format_rules(Stage stage);

/// Per-stage prompt templates loaded from external files. File format:
/// first line "#stage: <tag>", then the system text, then a "---" line,
/// then the user text. Placeholders look like {query}; the known set is
/// query, context, rationale, verifications, format_rules, answer,
/// ground_truth, claims. Immutable after load.
class PromptEngine {
public:
    static PromptEngine load(const std::filesystem::path& dir);

    /// Pure substitution; every placeholder in the stage template must be
    /// bound. Rendering the same bindings twice is byte-identical.
    RenderedPrompt render(Stage stage, const std::map<std::string, std::string>& bindings) const;

    const std::set<std::string>& placeholders(Stage stage) const;

private:
    struct Template {
        std::string system;
        std::string user;
        std::set<std::string> placeholders;
    };
    std::map<Stage, Template> templates_;
};

} // namespace factrag
