#include "factrag/retriever.hpp"

#include <algorithm>

#include "factrag/errors.hpp"
#include "factrag/triplet_extract.hpp"

namespace factrag {

HybridRetriever::HybridRetriever(const CorpusStore& store, const Embedder& embedder,
                                 WebProvider* web)
    : store_(store),
      embedder_(embedder),
      web_(web),
      vector_index_(store, embedder),
      lexical_index_(store),
      kg_(KnowledgeGraph::from_triplets(store.triplets())) {}

std::vector<ScoredItem> HybridRetriever::semantic_search(std::string_view query,
                                                         std::size_t k) const {
    return vector_index_.search(query, k);
}

std::vector<ScoredItem> HybridRetriever::lexical_search(std::string_view query,
                                                        std::size_t k) const {
    return lexical_index_.search(query, k);
}

std::vector<ScoredItem> HybridRetriever::fused_paragraphs(std::string_view query,
                                                          const RetrievalConfig& cfg) const {
    const std::vector<ScoredItem> sem = vector_index_.search(query, cfg.p_k);
    std::vector<ScoredItem> lex;
    try {
        lex = lexical_index_.search(query, cfg.p_k);
    } catch (const Error& e) {
        // A query whose terms appear nowhere yields an empty lexical list,
        // not a failed retrieval; EmptyIndex still propagates.
        if (e.code() == ErrorCode::EmptyIndex) throw;
    }
    return rerank_fuse(sem, lex, cfg.lambda, cfg.p_k, cfg.rrf_k);
}

std::vector<Triplet> HybridRetriever::retrieve_triplets(std::string_view query,
                                                        const RetrievalConfig& cfg) const {
    try {
        return kg_.subgraph_retrieve(query, embedder_, cfg.p_k);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoAnchorEntities) throw;
    }

    // Fallback: extract triplets from the fused paragraphs and rank them
    // against the query directly.
    std::vector<Chunk> top_chunks;
    for (const ScoredItem& item : fused_paragraphs(query, cfg)) {
        const ContextItem ci = store_.get_item(item.id);
        Chunk c;
        c.pid = ci.id;
        c.text = ci.text;
        top_chunks.push_back(std::move(c));
    }
    std::vector<Triplet> extracted = extract_triplets(top_chunks, store_.aliases());
    const std::vector<float> qv = embedder_.embed(query);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(extracted.size());
    for (std::size_t i = 0; i < extracted.size(); ++i) {
        scored.emplace_back(cosine_similarity(qv, embedder_.embed(extracted[i].render())), i);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return extracted[a.second].tid < extracted[b.second].tid;
    });
    if (scored.size() > cfg.p_k) scored.resize(cfg.p_k);
    std::vector<Triplet> out;
    out.reserve(scored.size());
    for (const auto& [score, i] : scored) out.push_back(extracted[i]);
    return out;
}

RetrievalResult HybridRetriever::retrieve(std::string_view query, const RetrievalConfig& cfg,
                                          ContextShape shape) const {
    RetrievalResult result;
    std::vector<ContextItem> paragraphs;
    std::vector<ContextItem> triplet_items;
    std::vector<ContextItem> web_items;

    if (shape == ContextShape::paragraphs) {
        result.semantic = vector_index_.search(query, cfg.p_k);
        try {
            result.lexical = lexical_index_.search(query, cfg.p_k);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::EmptyIndex) throw;
        }
        result.fused = rerank_fuse(result.semantic, result.lexical, cfg.lambda, cfg.p_k, cfg.rrf_k);
        for (const ScoredItem& item : result.fused) paragraphs.push_back(store_.get_item(item.id));
    } else {
        result.triplets = retrieve_triplets(query, cfg);
        for (const Triplet& t : result.triplets) {
            triplet_items.push_back(ContextItem{t.tid, t.render(), ItemKind::triplet});
        }
    }

    if (web_ != nullptr && cfg.web_k > 0) {
        result.web = web_search(*web_, query, cfg.web_k, cfg.whitelist, store_.manifest().chunking);
        for (const WebSnippet& s : result.web) {
            web_items.push_back(ContextItem{s.wid, s.text, ItemKind::web});
        }
    }

    result.context = assemble_context(paragraphs, triplet_items, web_items, cfg.budget_tokens);
    return result;
}

} // namespace factrag
