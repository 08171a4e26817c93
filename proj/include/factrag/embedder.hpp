#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace factrag {

/// Text embedding provider. Implementations must be deterministic per
/// (fingerprint, text) and return unit-norm vectors of a fixed dimension.
class Embedder {
public:
    virtual ~Embedder() = default;

    virtual std::size_t dim() const = 0;

    /// Identifies the provider + configuration that produced a vector index;
    /// stored in the manifest and checked before semantic search.
    virtual std::string fingerprint() const = 0;

    /// Embeds non-empty text into a unit-norm vector of dim() entries.
    virtual std::vector<float> embed(std::string_view text) const = 0;

    virtual std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) const;
};

/// Deterministic, dependency-free embedder for tests and offline runs.
/// Hashes word-token n-grams (n = 1..3) with a seeded FNV-1a, scatters them
/// into a dim-sized accumulator (sign from the hash high bit, weight 1/n),
/// and L2-normalizes in double precision.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(std::size_t dim = 256, std::uint64_t seed = 0x5eed);

    std::size_t dim() const override { return dim_; }
    std::string fingerprint() const override;
    std::vector<float> embed(std::string_view text) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Cosine similarity in double precision; both vectors must share a size.
double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

} // namespace factrag
