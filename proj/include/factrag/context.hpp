#pragma once

#include <string>
#include <vector>

namespace factrag {

enum class ItemKind { paragraph, triplet, web };

constexpr const char* item_kind_name(ItemKind kind) {
    switch (kind) {
        case ItemKind::paragraph: return "paragraph";
        case ItemKind::triplet: return "triplet";
        case ItemKind::web: return "web";
    }
    return "paragraph";
}

/// One retrievable unit: a paragraph chunk, a triplet, or a web snippet,
/// addressed by its PID-/TID-/WID- identifier.
struct ContextItem {
    std::string id;
    std::string text;
    ItemKind kind = ItemKind::paragraph;
};

/// A knowledge triplet; renders as "subject | relation | object".
struct Triplet {
    std::string tid; // "TID-<n>"
    std::string subject;
    std::string relation;
    std::string object;
    std::string provenance; // pid of the source chunk or a KG edge id

    std::string render() const { return subject + " | " + relation + " | " + object; }
};

/// A web result chunk. Never persisted to the corpus store.
struct WebSnippet {
    std::string wid; // "WID-<n>"
    std::string url;
    std::string text;
    std::string retrieved_at; // ISO-8601 UTC
};

/// The ordered, identified context handed to the pipeline. Rendering is one
/// line per item, "<identifier>: <text>", with item text flattened to a
/// single line.
struct Context {
    std::vector<ContextItem> items;

    bool empty() const { return items.empty(); }
    std::size_t size() const { return items.size(); }

    bool contains(const std::string& id) const;
    std::string rendered() const;
    static std::string render_line(const ContextItem& item);
};

} // namespace factrag
