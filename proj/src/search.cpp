#include "factrag/search.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"

namespace factrag {

void sort_scored(std::vector<ScoredItem>& items) {
    std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
}

VectorIndex::VectorIndex(const CorpusStore& store, const Embedder& embedder)
    : store_(store), embedder_(embedder) {}

std::vector<ScoredItem> VectorIndex::search(std::string_view query, std::size_t k) const {
    if (k == 0) throw Error(ErrorCode::PreconditionViolation, "k must be >= 1");
    const auto& chunks = store_.chunks();
    const auto& vectors = store_.vectors();
    if (chunks.empty() || vectors.empty()) {
        throw Error(ErrorCode::EmptyIndex, "vector index is empty; run index first");
    }
    if (store_.manifest().embedding_fingerprint != embedder_.fingerprint()) {
        throw Error(ErrorCode::FingerprintMismatch,
                    "index built with " + store_.manifest().embedding_fingerprint + ", queried with " +
                        embedder_.fingerprint());
    }
    const std::size_t dim = store_.vector_dim();
    const std::vector<float> q = embedder_.embed(query);
    if (q.size() != dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "query dim " + std::to_string(q.size()) + " vs index dim " + std::to_string(dim));
    }

    std::vector<ScoredItem> scored;
    scored.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const float* row = vectors.data() + i * dim;
        double dot = 0.0, nr = 0.0, nq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += static_cast<double>(row[d]) * static_cast<double>(q[d]);
            nr += static_cast<double>(row[d]) * static_cast<double>(row[d]);
            nq += static_cast<double>(q[d]) * static_cast<double>(q[d]);
        }
        const double denom = std::sqrt(nr) * std::sqrt(nq);
        const double score = denom > 0.0 ? dot / denom : 0.0;
        scored.push_back({chunks[i].pid, score, SearchSource::semantic});
    }
    sort_scored(scored);
    if (scored.size() > k) scored.resize(k);
    return scored;
}

LexicalIndex::LexicalIndex(const CorpusStore& store) {
    long total_len = 0;
    for (const Chunk& c : store.chunks()) {
        const std::size_t doc = ids_.size();
        ids_.push_back(c.pid);
        doc_tokens_.push_back(word_tokens_lower(c.text));
        doc_len_.push_back(static_cast<int>(doc_tokens_.back().size()));
        total_len += doc_len_.back();

        std::map<std::string, int> tf;
        for (const std::string& t : doc_tokens_.back()) ++tf[t];
        for (const auto& [term, count] : tf) postings_[term].push_back({doc, count});
    }
    if (!ids_.empty()) avg_len_ = static_cast<double>(total_len) / static_cast<double>(ids_.size());
}

std::vector<ScoredItem> LexicalIndex::search(std::string_view query, std::size_t k) const {
    if (k == 0) throw Error(ErrorCode::PreconditionViolation, "k must be >= 1");
    if (ids_.empty()) throw Error(ErrorCode::EmptyIndex, "lexical index is empty; run index first");

    const std::vector<std::string> query_tokens = word_tokens_lower(query);
    std::vector<std::string> terms = query_tokens;
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const double n = static_cast<double>(ids_.size());
    std::unordered_map<std::size_t, double> scores;
    for (const std::string& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const Posting& p : it->second) {
            const double tf = static_cast<double>(p.tf);
            const double norm = kK1 * (1.0 - kB + kB * doc_len_[p.doc] / avg_len_);
            scores[p.doc] += idf * (tf * (kK1 + 1.0)) / (tf + norm);
        }
    }

    std::vector<ScoredItem> scored;
    scored.reserve(scores.size());
    for (const auto& [doc, score] : scores) {
        double s = score;
        if (!query_tokens.empty()) {
            const auto& toks = doc_tokens_[doc];
            if (std::search(toks.begin(), toks.end(), query_tokens.begin(), query_tokens.end()) !=
                toks.end()) {
                s *= kPhraseBoost;
            }
        }
        scored.push_back({ids_[doc], s, SearchSource::lexical});
    }
    sort_scored(scored);
    if (scored.size() > k) scored.resize(k);
    return scored;
}

std::vector<ScoredItem> rerank_fuse(const std::vector<ScoredItem>& semantic,
                                    const std::vector<ScoredItem>& lexical, double lambda,
                                    std::size_t p_k, int rrf_k) {
    if (p_k == 0) throw Error(ErrorCode::PreconditionViolation, "p_k must be >= 1");
    if (lambda < 0.0 || lambda > 1.0) {
        throw Error(ErrorCode::ConfigError, "lambda must be in [0,1], got " + std::to_string(lambda));
    }

    std::map<std::string, ScoredItem> fused;
    auto add = [&](const std::vector<ScoredItem>& list, double weight, SearchSource source) {
        for (std::size_t rank = 1; rank <= list.size(); ++rank) {
            const ScoredItem& in = list[rank - 1];
            auto [it, inserted] = fused.try_emplace(in.id, ScoredItem{in.id, 0.0, source});
            it->second.score += weight / static_cast<double>(rrf_k + rank);
        }
    };
    add(semantic, 1.0 - lambda, SearchSource::semantic);
    add(lexical, lambda, SearchSource::lexical);

    std::vector<ScoredItem> out;
    out.reserve(fused.size());
    for (auto& [id, item] : fused) out.push_back(std::move(item));
    sort_scored(out);
    if (out.size() > p_k) out.resize(p_k);
    return out;
}

Context assemble_context(const std::vector<ContextItem>& paragraphs,
                         const std::vector<ContextItem>& triplets,
                         const std::vector<ContextItem>& web, int budget_tokens) {
    Context ctx;
    int used = 0;
    bool truncated = false;
    auto take = [&](const std::vector<ContextItem>& items) {
        for (const ContextItem& item : items) {
            if (truncated) return;
            if (ctx.contains(item.id)) continue;
            const int line_tokens = count_tokens(Context::render_line(item));
            if (budget_tokens > 0 && used + line_tokens > budget_tokens) {
                truncated = true;
                return;
            }
            ctx.items.push_back(item);
            used += line_tokens;
        }
    };
    take(paragraphs);
    take(triplets);
    take(web);
    if (ctx.empty()) throw Error(ErrorCode::ContextEmpty, "no context items survived assembly");
    return ctx;
}

} // namespace factrag
