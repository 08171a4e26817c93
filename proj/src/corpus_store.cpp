#include "factrag/corpus_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "factrag/embedder.hpp"
#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"
#include "factrag/triplet_extract.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace factrag {

namespace {

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t trail = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c >> 5) == 0x06) {
            trail = 1;
        } else if ((c >> 4) == 0x0e) {
            trail = 2;
        } else if ((c >> 3) == 0x1e) {
            trail = 3;
        } else {
            return false;
        }
        if (i + trail >= s.size()) return false;
        for (std::size_t j = 1; j <= trail; ++j) {
            if ((static_cast<unsigned char>(s[i + j]) >> 6) != 0x02) return false;
        }
        i += trail + 1;
    }
    return true;
}

void write_lines(const fs::path& file, const std::vector<std::string>& lines) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
    for (const auto& line : lines) out << line << '\n';
}

std::vector<json> read_jsonl(const fs::path& file) {
    std::vector<json> records;
    std::ifstream in(file, std::ios::binary);
    if (!in) return records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(json::parse(line));
    }
    return records;
}

} // namespace

std::string CorpusManifest::fingerprint() const {
    std::string blob = tokenizer_rule;
    blob += '|';
    blob += std::to_string(chunking.max_chunk_tokens);
    blob += '|';
    blob += std::to_string(chunking.overlap_tokens);
    blob += '|';
    blob += std::to_string(document_count);
    blob += '|';
    blob += std::to_string(chunk_count);
    blob += '|';
    blob += std::to_string(triplet_count);
    blob += '|';
    blob += embedding_fingerprint;
    blob += '|';
    blob += std::to_string(embedding_dim);
    return fnv1a64_hex(blob);
}

std::vector<Chunk> split_into_chunks(const std::string& doc_id, std::string_view body,
                                     int max_chunk_tokens, int overlap_tokens) {
    if (max_chunk_tokens <= 0 || overlap_tokens < 0 || overlap_tokens >= max_chunk_tokens) {
        throw Error(ErrorCode::InvalidChunkConfig,
                    "need 0 <= overlap < max, got max=" + std::to_string(max_chunk_tokens) +
                        " overlap=" + std::to_string(overlap_tokens));
    }
    std::vector<Chunk> out;
    const auto maxn = static_cast<std::size_t>(max_chunk_tokens);
    for (const TextSpan& para : split_paragraphs(body)) {
        const std::string_view text = body.substr(para.begin, para.end - para.begin);
        const std::vector<TokenSpan> tokens = scan_tokens(text);
        if (tokens.empty()) continue;

        auto emit = [&](std::size_t s, std::size_t e) {
            Chunk c;
            c.doc_id = doc_id;
            c.seq = static_cast<int>(out.size());
            c.pid = "PID-" + doc_id + "-" + std::to_string(c.seq);
            c.text = std::string(text.substr(tokens[s].begin, tokens[e - 1].end - tokens[s].begin));
            c.token_count = static_cast<int>(e - s);
            out.push_back(std::move(c));
        };

        if (tokens.size() <= maxn) {
            emit(0, tokens.size());
            continue;
        }

        // Oversized paragraph: prefer sentence boundaries, fall back to hard
        // cuts, and start each follow-up chunk overlap_tokens back.
        const std::vector<std::size_t> ends = sentence_end_tokens(text, tokens);
        std::size_t s = 0;
        while (s < tokens.size()) {
            std::size_t e;
            if (tokens.size() - s <= maxn) {
                e = tokens.size();
            } else {
                // Largest sentence-final token index in [s, s + max).
                auto it = std::upper_bound(ends.begin(), ends.end(), s + maxn - 1);
                if (it != ends.begin() && *std::prev(it) >= s) {
                    e = *std::prev(it) + 1;
                } else {
                    e = s + maxn;
                }
            }
            emit(s, e);
            if (e == tokens.size()) break;
            const std::size_t back = std::min<std::size_t>(overlap_tokens, e - s - 1);
            s = e - back;
        }
    }
    return out;
}

StoreWriteLock::StoreWriteLock(const fs::path& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (fs::exists(root / ".serve.lock")) {
        throw Error(ErrorCode::StoreLocked, "store is being served, refusing to mutate: " + root.string());
    }
    path_ = root / ".write.lock";
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        path_.clear();
        throw Error(ErrorCode::StoreLocked, "another writer holds " + (root / ".write.lock").string());
    }
    ::close(fd);
}

StoreWriteLock::~StoreWriteLock() {
    if (!path_.empty()) {
        std::error_code ec;
        fs::remove(path_, ec);
    }
}

CorpusStore::CorpusStore(const fs::path& root, ChunkingConfig chunking) : root_(root) {
    std::error_code ec;
    fs::create_directories(root_ / "docs", ec);
    fs::create_directories(root_ / "chunks", ec);
    fs::create_directories(root_ / "triplets", ec);
    fs::create_directories(root_ / "vectors", ec);
    manifest_.store_root = root_.string();
    manifest_.chunking = chunking;
    manifest_.tokenizer_rule = std::string(kTokenizerRule);
    load();
}

void CorpusStore::load() {
    const fs::path mpath = root_ / "manifest.json";
    if (fs::exists(mpath)) {
        std::ifstream in(mpath, std::ios::binary);
        json m = json::parse(in);
        manifest_.chunking.max_chunk_tokens = m["chunking"]["max_chunk_tokens"].get<int>();
        manifest_.chunking.overlap_tokens = m["chunking"]["overlap_tokens"].get<int>();
        manifest_.tokenizer_rule = m["tokenizer_rule"].get<std::string>();
        manifest_.document_count = m["document_count"].get<std::size_t>();
        manifest_.chunk_count = m["chunk_count"].get<std::size_t>();
        manifest_.triplet_count = m["triplet_count"].get<std::size_t>();
        manifest_.embedding_fingerprint = m["embedding_fingerprint"].get<std::string>();
        manifest_.embedding_dim = m["embedding_dim"].get<std::size_t>();
        manifest_.sealed = m["sealed"].get<bool>();
    }
    for (const json& r : read_jsonl(root_ / "docs" / "docs.jsonl")) {
        Document d;
        d.doc_id = r["id"].get<std::string>();
        d.title = r.value("title", "");
        d.body = r["body"].get<std::string>();
        if (r.contains("metadata")) {
            for (auto it = r["metadata"].begin(); it != r["metadata"].end(); ++it) {
                d.metadata[it.key()] = it.value().get<std::string>();
            }
        }
        if (doc_index_.count(d.doc_id)) continue;
        doc_index_[d.doc_id] = docs_.size();
        docs_.push_back(std::move(d));
    }
    for (const json& r : read_jsonl(root_ / "chunks" / "chunks.jsonl")) {
        Chunk c;
        c.pid = r["id"].get<std::string>();
        c.doc_id = r["doc_id"].get<std::string>();
        c.seq = r["seq"].get<int>();
        c.text = r["text"].get<std::string>();
        c.token_count = r["token_count"].get<int>();
        chunk_index_[c.pid] = chunks_.size();
        chunks_.push_back(std::move(c));
    }
    for (const json& r : read_jsonl(root_ / "triplets" / "triplets.jsonl")) {
        Triplet t;
        t.tid = r["id"].get<std::string>();
        t.subject = r["subject"].get<std::string>();
        t.relation = r["relation"].get<std::string>();
        t.object = r["object"].get<std::string>();
        t.provenance = r.value("provenance", "");
        triplet_index_[t.tid] = triplets_.size();
        triplets_.push_back(std::move(t));
    }
    const fs::path alpath = root_ / "aliases.json";
    if (fs::exists(alpath)) {
        std::ifstream in(alpath, std::ios::binary);
        json a = json::parse(in);
        for (auto it = a.begin(); it != a.end(); ++it) aliases_[it.key()] = it.value().get<std::string>();
    }
    const fs::path vpath = root_ / "vectors" / "chunks.bin";
    if (fs::exists(vpath) && manifest_.embedding_dim > 0) {
        const auto bytes = fs::file_size(vpath);
        const auto expected = chunks_.size() * manifest_.embedding_dim * sizeof(float);
        if (bytes != expected) {
            throw Error(ErrorCode::IoError, "vector file size mismatch: " + vpath.string() + " has " +
                                                std::to_string(bytes) + " bytes, expected " +
                                                std::to_string(expected));
        }
        vectors_.resize(bytes / sizeof(float));
        std::ifstream in(vpath, std::ios::binary);
        in.read(reinterpret_cast<char*>(vectors_.data()), static_cast<std::streamsize>(bytes));
        if (!in) throw Error(ErrorCode::IoError, "cannot read " + vpath.string());
    }
}

void CorpusStore::save_manifest() const {
    json m;
    m["store_root"] = manifest_.store_root;
    m["chunking"] = {{"max_chunk_tokens", manifest_.chunking.max_chunk_tokens},
                     {"overlap_tokens", manifest_.chunking.overlap_tokens}};
    m["tokenizer_rule"] = manifest_.tokenizer_rule;
    m["document_count"] = manifest_.document_count;
    m["chunk_count"] = manifest_.chunk_count;
    m["triplet_count"] = manifest_.triplet_count;
    m["embedding_fingerprint"] = manifest_.embedding_fingerprint;
    m["embedding_dim"] = manifest_.embedding_dim;
    m["sealed"] = manifest_.sealed;
    m["fingerprint"] = manifest_.fingerprint();
    std::ofstream out(root_ / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (root_ / "manifest.json").string());
    out << m.dump(2) << '\n';
}

void CorpusStore::append_doc_record(const Document& doc) const {
    json r;
    r["id"] = doc.doc_id;
    r["title"] = doc.title;
    r["body"] = doc.body;
    json meta = json::object();
    for (const auto& [k, v] : doc.metadata) meta[k] = v;
    r["metadata"] = meta;
    std::ofstream out(root_ / "docs" / "docs.jsonl", std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to docs.jsonl");
    out << r.dump() << '\n';
}

std::string CorpusStore::ingest_document(const Document& doc) {
    if (doc.doc_id.empty()) throw Error(ErrorCode::PreconditionViolation, "document id is empty");
    if (doc.body.empty()) throw Error(ErrorCode::EmptyDocument, "document body is empty: " + doc.doc_id);
    if (!valid_utf8(doc.body)) {
        throw Error(ErrorCode::PreconditionViolation, "document body is not valid UTF-8: " + doc.doc_id);
    }
    StoreWriteLock lock(root_);
    auto it = doc_index_.find(doc.doc_id);
    if (it != doc_index_.end()) {
        if (docs_[it->second].body == doc.body) return doc.doc_id;
        throw Error(ErrorCode::DuplicateDocId, "id already ingested with different body: " + doc.doc_id);
    }
    doc_index_[doc.doc_id] = docs_.size();
    docs_.push_back(doc);
    append_doc_record(doc);
    manifest_.document_count = docs_.size();
    manifest_.sealed = false;
    save_manifest();
    return doc.doc_id;
}

std::vector<Chunk> CorpusStore::chunk_document(const std::string& doc_id, int max_chunk_tokens,
                                               int overlap_tokens) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw Error(ErrorCode::UnknownDocument, "no such document: " + doc_id);
    return split_into_chunks(doc_id, docs_[it->second].body, max_chunk_tokens, overlap_tokens);
}

void CorpusStore::index_all(const Embedder& embedder) {
    StoreWriteLock lock(root_);
    if (docs_.empty()) {
        throw Error(ErrorCode::EmptyIndex, "nothing to index, ingest documents first");
    }

    chunks_.clear();
    chunk_index_.clear();
    for (const Document& doc : docs_) {
        auto dc = split_into_chunks(doc.doc_id, doc.body, manifest_.chunking.max_chunk_tokens,
                                    manifest_.chunking.overlap_tokens);
        for (Chunk& c : dc) {
            chunk_index_[c.pid] = chunks_.size();
            chunks_.push_back(std::move(c));
        }
    }

    triplets_ = extract_triplets(chunks_, aliases_);
    triplet_index_.clear();
    for (std::size_t i = 0; i < triplets_.size(); ++i) triplet_index_[triplets_[i].tid] = i;

    vectors_.clear();
    vectors_.reserve(chunks_.size() * embedder.dim());
    for (const Chunk& c : chunks_) {
        const auto v = embedder.embed(c.text);
        if (v.size() != embedder.dim()) {
            throw Error(ErrorCode::DimensionMismatch, "embedder returned " + std::to_string(v.size()) +
                                                          " dims, expected " + std::to_string(embedder.dim()));
        }
        vectors_.insert(vectors_.end(), v.begin(), v.end());
    }

    std::vector<std::string> chunk_lines;
    chunk_lines.reserve(chunks_.size());
    for (const Chunk& c : chunks_) {
        json r;
        r["id"] = c.pid;
        r["doc_id"] = c.doc_id;
        r["seq"] = c.seq;
        r["text"] = c.text;
        r["token_count"] = c.token_count;
        chunk_lines.push_back(r.dump());
    }
    write_lines(root_ / "chunks" / "chunks.jsonl", chunk_lines);

    std::vector<std::string> triplet_lines;
    triplet_lines.reserve(triplets_.size());
    for (const Triplet& t : triplets_) {
        json r;
        r["id"] = t.tid;
        r["subject"] = t.subject;
        r["relation"] = t.relation;
        r["object"] = t.object;
        r["provenance"] = t.provenance;
        triplet_lines.push_back(r.dump());
    }
    write_lines(root_ / "triplets" / "triplets.jsonl", triplet_lines);

    {
        std::ofstream out(root_ / "vectors" / "chunks.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write vectors/chunks.bin");
        out.write(reinterpret_cast<const char*>(vectors_.data()),
                  static_cast<std::streamsize>(vectors_.size() * sizeof(float)));
    }

    manifest_.document_count = docs_.size();
    manifest_.chunk_count = chunks_.size();
    manifest_.triplet_count = triplets_.size();
    manifest_.embedding_fingerprint = embedder.fingerprint();
    manifest_.embedding_dim = embedder.dim();
    manifest_.sealed = true;
    save_manifest();
}

ContextItem CorpusStore::get_item(const std::string& identifier) const {
    if (identifier.rfind("WID-", 0) == 0) {
        throw Error(ErrorCode::WebIdentifierNotPersisted,
                    "web snippets are never persisted: " + identifier);
    }
    if (identifier.rfind("PID-", 0) == 0) {
        auto it = chunk_index_.find(identifier);
        if (it == chunk_index_.end()) throw Error(ErrorCode::UnknownIdentifier, "no such item: " + identifier);
        const Chunk& c = chunks_[it->second];
        return ContextItem{c.pid, c.text, ItemKind::paragraph};
    }
    if (identifier.rfind("TID-", 0) == 0) {
        auto it = triplet_index_.find(identifier);
        if (it == triplet_index_.end()) throw Error(ErrorCode::UnknownIdentifier, "no such item: " + identifier);
        const Triplet& t = triplets_[it->second];
        return ContextItem{t.tid, t.render(), ItemKind::triplet};
    }
    throw Error(ErrorCode::UnknownIdentifier, "unrecognized identifier: " + identifier);
}

const Document& CorpusStore::document(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw Error(ErrorCode::UnknownDocument, "no such document: " + doc_id);
    return docs_[it->second];
}

std::vector<std::string> CorpusStore::document_ids() const {
    std::vector<std::string> ids;
    ids.reserve(docs_.size());
    for (const Document& d : docs_) ids.push_back(d.doc_id);
    return ids;
}

std::string CorpusStore::content_hash() const {
    std::vector<fs::path> files;
    if (fs::exists(root_)) {
        for (const auto& entry : fs::recursive_directory_iterator(root_)) {
            if (!entry.is_regular_file()) continue;
            const auto name = entry.path().filename().string();
            if (name == ".write.lock" || name == ".serve.lock") continue;
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a64("corpus-store");
    for (const fs::path& f : files) {
        h = fnv1a64(fs::relative(f, root_).string(), h);
        std::ifstream in(f, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        h = fnv1a64(bytes, h);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace factrag
