#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "factrag/context.hpp"
#include "factrag/corpus_store.hpp"
#include "factrag/embedder.hpp"
#include "factrag/kg.hpp"
#include "factrag/search.hpp"
#include "factrag/web_search.hpp"

namespace factrag {

struct RetrievalConfig {
    std::size_t p_k = 5; // top paragraphs (or triplets) kept after fusion
    double lambda = 0.3; // lexical weight in rank fusion
    int rrf_k = 60;
    int budget_tokens = 0; // 0 = unlimited
    std::size_t web_k = 0; // 0 disables web search
    std::vector<std::string> whitelist;
};

/// What shape the primary context takes: paragraph chunks (default) or
/// triplets standing in for them.
enum class ContextShape { paragraphs, triplets };

struct RetrievalResult {
    Context context;
    std::vector<ScoredItem> semantic;
    std::vector<ScoredItem> lexical;
    std::vector<ScoredItem> fused;
    std::vector<Triplet> triplets;
    std::vector<WebSnippet> web; // in-flight only, never persisted
};

/// Front of the retrieval stack: fuses semantic and lexical search over the
/// store, optionally swaps in triplets or appends web snippets, and
/// assembles the identified context.
class HybridRetriever {
public:
    HybridRetriever(const CorpusStore& store, const Embedder& embedder,
                    WebProvider* web = nullptr);

    std::vector<ScoredItem> semantic_search(std::string_view query, std::size_t k) const;
    std::vector<ScoredItem> lexical_search(std::string_view query, std::size_t k) const;

    /// Fused top-p_k paragraph ranking.
    std::vector<ScoredItem> fused_paragraphs(std::string_view query, const RetrievalConfig& cfg) const;

    /// Top-k triplets for the query: subgraph retrieval over the store's
    /// graph when the query anchors a node, otherwise triplets extracted
    /// from the fused paragraphs, scored by query cosine.
    std::vector<Triplet> retrieve_triplets(std::string_view query, const RetrievalConfig& cfg) const;

    RetrievalResult retrieve(std::string_view query, const RetrievalConfig& cfg,
                             ContextShape shape = ContextShape::paragraphs) const;

    const CorpusStore& store() const { return store_; }

private:
    const CorpusStore& store_;
    const Embedder& embedder_;
    WebProvider* web_;
    VectorIndex vector_index_;
    LexicalIndex lexical_index_;
    KnowledgeGraph kg_;
};

} // namespace factrag
