#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "factrag/context.hpp"
#include "factrag/corpus_store.hpp"
#include "factrag/embedder.hpp"

namespace factrag {

enum class SearchSource { semantic, lexical, triplet, web };

struct ScoredItem {
    std::string id;
    double score = 0.0;
    SearchSource source = SearchSource::semantic;
};

/// Non-increasing by score, ties by ascending identifier.
void sort_scored(std::vector<ScoredItem>& items);

/// Exhaustive cosine scan over the store's chunk vectors. Exact by design;
/// corpus sizes here never justify an approximate index.
class VectorIndex {
public:
    VectorIndex(const CorpusStore& store, const Embedder& embedder);

    std::vector<ScoredItem> search(std::string_view query, std::size_t k) const;

private:
    const CorpusStore& store_;
    const Embedder& embedder_;
};

/// BM25 (k1 = 1.2, b = 0.75) over lowercased word tokens, with idf
/// ln(1 + (N - df + 0.5) / (df + 0.5)). Chunks containing the full query as
/// a contiguous token phrase get a x2.0 score boost; chunks matching no
/// query term are excluded.
class LexicalIndex {
public:
    explicit LexicalIndex(const CorpusStore& store);

    std::vector<ScoredItem> search(std::string_view query, std::size_t k) const;

    static constexpr double kK1 = 1.2;
    static constexpr double kB = 0.75;
    static constexpr double kPhraseBoost = 2.0;

private:
    struct Posting {
        std::size_t doc = 0; // index into docs_
        int tf = 0;
    };
    std::vector<std::string> ids_;
    std::vector<std::vector<std::string>> doc_tokens_;
    std::vector<int> doc_len_;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Reciprocal-rank fusion: score(id) = lambda / (rrf_k + rank_lexical)
///   + (1 - lambda) / (rrf_k + rank_semantic), ranks 1-based, absent lists
/// contributing 0. Returns the top p_k by fused score, ties broken by
/// ascending identifier.
std::vector<ScoredItem> rerank_fuse(const std::vector<ScoredItem>& semantic,
                                    const std::vector<ScoredItem>& lexical, double lambda,
                                    std::size_t p_k, int rrf_k = 60);

/// Concatenates items in the order paragraphs, triplets, web. Items are
/// dropped from the tail once adding one would push the rendered token count
/// past budget_tokens (<= 0 means unlimited); duplicate identifiers keep the
/// first occurrence.
Context assemble_context(const std::vector<ContextItem>& paragraphs,
                         const std::vector<ContextItem>& triplets,
                         const std::vector<ContextItem>& web, int budget_tokens);

} // namespace factrag
