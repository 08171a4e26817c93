#include "factrag/embedder.hpp"

#include <cmath>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"

namespace factrag {

std::vector<std::vector<float>> Embedder::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(embed(t));
    return out;
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw Error(ErrorCode::ConfigError, "embedding dimension must be positive");
}

std::string HashEmbedder::fingerprint() const {
    return "hash-ngram-v1/d" + std::to_string(dim_) + "/s" + std::to_string(seed_);
}

std::vector<float> HashEmbedder::embed(std::string_view text) const {
    if (text.empty()) throw Error(ErrorCode::PreconditionViolation, "cannot embed empty text");

    std::vector<double> acc(dim_, 0.0);
    auto add_feature = [&](std::string_view feature, double weight) {
        const std::uint64_t h = fnv1a64(feature, seed_);
        const double sign = (h >> 63) ? -1.0 : 1.0;
        acc[h % dim_] += sign * weight;
    };

    const std::vector<std::string> words = word_tokens_lower(text);
    if (words.empty()) {
        add_feature(text, 1.0);
    } else {
        for (std::size_t n = 1; n <= 3 && n <= words.size(); ++n) {
            for (std::size_t i = 0; i + n <= words.size(); ++i) {
                std::string gram = words[i];
                for (std::size_t j = 1; j < n; ++j) {
                    gram += ' ';
                    gram += words[i + j];
                }
                add_feature(gram, 1.0 / static_cast<double>(n));
            }
        }
    }

    double norm_sq = 0.0;
    for (double v : acc) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);
    std::vector<float> out(dim_, 0.0f);
    if (norm > 0.0) {
        for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] / norm);
    } else {
        // All features cancelled; fall back to a deterministic unit basis
        // vector so the contract of unit norm still holds.
        out[fnv1a64(text, seed_) % dim_] = 1.0f;
    }
    return out;
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch, "cosine over mismatched dims: " +
                                                      std::to_string(a.size()) + " vs " +
                                                      std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace factrag
