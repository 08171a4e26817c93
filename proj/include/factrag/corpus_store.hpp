#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "factrag/context.hpp"

namespace factrag {

struct Document {
    std::string doc_id;
    std::string title;
    std::string body; // UTF-8, non-empty
    std::map<std::string, std::string> metadata;
};

/// A paragraph chunk. pid is "PID-<doc_id>-<seq>"; seq values are contiguous
/// per document and token_count is the tokenizer count of text.
struct Chunk {
    std::string pid;
    std::string doc_id;
    int seq = 0;
    std::string text;
    int token_count = 0;
};

struct ChunkingConfig {
    int max_chunk_tokens = 512;
    int overlap_tokens = 64;
};

struct CorpusManifest {
    std::string store_root;
    ChunkingConfig chunking;
    std::string tokenizer_rule;
    std::size_t document_count = 0;
    std::size_t chunk_count = 0;
    std::size_t triplet_count = 0;
    std::string embedding_fingerprint; // empty until indexed
    std::size_t embedding_dim = 0;
    bool sealed = false;

    /// Stable hash over everything that defines the built index; reported by
    /// the service and asserted unchanged by deterministic re-indexing.
    std::string fingerprint() const;
};

class Embedder; // embedder.hpp

/// Single-directory corpus store:
///   <root>/manifest.json
///   <root>/docs/docs.jsonl        (append-only)
///   <root>/chunks/chunks.jsonl    (rewritten on index)
///   <root>/triplets/triplets.jsonl
///   <root>/vectors/chunks.bin     (little-endian f32, row-major, dim in manifest)
/// Single writer, many readers: ingestion and indexing take an exclusive
/// lock file; reads are safe once the manifest is sealed.
class CorpusStore {
public:
    /// Opens an existing store or initializes an empty one at `root`.
    explicit CorpusStore(const std::filesystem::path& root, ChunkingConfig chunking = {});

    /// Persists a document. Re-ingesting an identical (id, body) pair is a
    /// no-op returning the same id; same id with a different body is an error.
    std::string ingest_document(const Document& doc);

    /// Splits a document into chunks. Paragraph boundaries are preferred,
    /// then sentence boundaries, then hard token cuts; consecutive chunks
    /// split from one oversized paragraph share `overlap_tokens` tokens.
    std::vector<Chunk> chunk_document(const std::string& doc_id, int max_chunk_tokens,
                                      int overlap_tokens) const;

    /// Chunks every document with the store config, extracts triplets,
    /// embeds all chunks, persists everything, and seals the manifest.
    void index_all(const Embedder& embedder);

    /// Exact lookup by PID-/TID- identifier. WID- identifiers are never
    /// persisted and always fail.
    ContextItem get_item(const std::string& identifier) const;

    const CorpusManifest& manifest() const { return manifest_; }
    const std::filesystem::path& root() const { return root_; }

    const std::vector<Chunk>& chunks() const { return chunks_; }
    const std::vector<Triplet>& triplets() const { return triplets_; }
    const Document& document(const std::string& doc_id) const;
    std::vector<std::string> document_ids() const;

    /// Chunk embeddings, row i matching chunks()[i]; empty until indexed.
    const std::vector<float>& vectors() const { return vectors_; }
    std::size_t vector_dim() const { return manifest_.embedding_dim; }

    /// Hash over every persisted file; used to assert no-mutation contracts.
    std::string content_hash() const;

    /// Alias table used for triplet entity linking during indexing; loaded
    /// from <root>/aliases.json when present ({"alias": "canonical", ...}).
    const std::map<std::string, std::string>& aliases() const { return aliases_; }

private:
    void load();
    void save_manifest() const;
    void append_doc_record(const Document& doc) const;

    std::filesystem::path root_;
    CorpusManifest manifest_;
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> doc_index_;
    std::vector<Chunk> chunks_;
    std::unordered_map<std::string, std::size_t> chunk_index_;
    std::vector<Triplet> triplets_;
    std::unordered_map<std::string, std::size_t> triplet_index_;
    std::vector<float> vectors_;
    std::map<std::string, std::string> aliases_;
};

/// Pure chunk splitter used by the store and by on-the-fly web chunking.
std::vector<Chunk> split_into_chunks(const std::string& doc_id, std::string_view body,
                                     int max_chunk_tokens, int overlap_tokens);

/// Held for the duration of a mutating store operation (ingest/index).
/// Creating it fails if another writer holds the lock or if a server is
/// serving the store (<root>/.serve.lock).
class StoreWriteLock {
public:
    explicit StoreWriteLock(const std::filesystem::path& root);
    ~StoreWriteLock();
    StoreWriteLock(const StoreWriteLock&) = delete;
    StoreWriteLock& operator=(const StoreWriteLock&) = delete;

private:
    std::filesystem::path path_;
};

} // namespace factrag
