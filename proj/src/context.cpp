#include "factrag/context.hpp"

#include "factrag/tokenizer.hpp"

namespace factrag {

bool Context::contains(const std::string& id) const {
    for (const ContextItem& item : items) {
        if (item.id == id) return true;
    }
    return false;
}

std::string Context::render_line(const ContextItem& item) {
    return item.id + ": " + normalize_ws(item.text);
}

std::string Context::rendered() const {
    std::string out;
    for (const ContextItem& item : items) {
        out += render_line(item);
        out += '\n';
    }
    return out;
}

} // namespace factrag
