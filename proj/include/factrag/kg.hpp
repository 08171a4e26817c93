#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "factrag/context.hpp"
#include "factrag/embedder.hpp"

namespace factrag {

/// Knowledge graph over canonical entities. Nodes are the canonical subject
/// and object strings; each edge keeps its originating triplet.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    static KnowledgeGraph from_triplets(const std::vector<Triplet>& triplets);

    /// Loads JSONL edges {"s":..., "r":..., "o":..., "id":...}; missing ids
    /// are assigned "TID-kg-<line>".
    static KnowledgeGraph from_jsonl(const std::filesystem::path& file);

    std::size_t node_count() const { return adjacency_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<Triplet>& edges() const { return edges_; }

    /// Anchor nodes are those whose canonical form appears in the query
    /// (word-boundary match); edges within two hops of an anchor are scored
    /// by cosine(embed(query), embed(rendered triplet)) and the top k
    /// returned. Ties break by ascending edge id.
    std::vector<Triplet> subgraph_retrieve(std::string_view query, const Embedder& embedder,
                                           std::size_t k) const;

private:
    void add_edge(Triplet t);

    std::vector<Triplet> edges_;
    std::map<std::string, std::vector<std::size_t>> adjacency_; // node -> incident edge indexes
};

} // namespace factrag
