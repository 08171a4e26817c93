#include "factrag/kg.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <set>

#include <json.hpp>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"
#include "factrag/triplet_extract.hpp"

using nlohmann::json;

namespace factrag {

namespace {

std::string lower_collapsed(std::string_view s) {
    std::string out = normalize_ws(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Word-boundary containment of needle in haystack, both pre-normalized.
bool contains_phrase(const std::string& haystack, const std::string& needle) {
    if (needle.empty()) return false;
    const std::string padded_hay = " " + haystack + " ";
    const std::string padded_needle = " " + needle + " ";
    return padded_hay.find(padded_needle) != std::string::npos;
}

} // namespace

void KnowledgeGraph::add_edge(Triplet t) {
    const std::size_t idx = edges_.size();
    adjacency_[t.subject].push_back(idx);
    adjacency_[t.object].push_back(idx);
    edges_.push_back(std::move(t));
}

KnowledgeGraph KnowledgeGraph::from_triplets(const std::vector<Triplet>& triplets) {
    KnowledgeGraph kg;
    for (const Triplet& t : triplets) kg.add_edge(t);
    return kg;
}

KnowledgeGraph KnowledgeGraph::from_jsonl(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + file.string());
    KnowledgeGraph kg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json r;
        try {
            r = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::DatasetParseError,
                        file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Triplet t;
        t.subject = canonical_entity(r["s"].get<std::string>());
        t.relation = r["r"].get<std::string>();
        t.object = canonical_entity(r["o"].get<std::string>());
        t.tid = r.value("id", "TID-kg-" + std::to_string(lineno));
        t.provenance = "kg";
        kg.add_edge(std::move(t));
    }
    return kg;
}

std::vector<Triplet> KnowledgeGraph::subgraph_retrieve(std::string_view query,
                                                       const Embedder& embedder,
                                                       std::size_t k) const {
    if (k == 0) throw Error(ErrorCode::PreconditionViolation, "k must be >= 1");

    // Match node names against the query both as written and with each
    // query word singularized, so "statins" anchors the node "statin".
    const std::string q_lower = lower_collapsed(query);
    std::string q_canon_words;
    for (const std::string& w : word_tokens_lower(query)) {
        if (!q_canon_words.empty()) q_canon_words += ' ';
        q_canon_words += canonical_entity(w);
    }

    std::deque<std::pair<std::string, int>> frontier; // node, hop distance
    std::set<std::string> visited;
    for (const auto& [node, incident] : adjacency_) {
        if (contains_phrase(q_lower, node) || contains_phrase(q_canon_words, node)) {
            frontier.emplace_back(node, 0);
            visited.insert(node);
        }
    }
    if (frontier.empty()) {
        throw Error(ErrorCode::NoAnchorEntities, "query names no graph entity");
    }

    // Collect edges reachable in at most two hops: edges incident to a node
    // at distance 0 or 1.
    std::set<std::size_t> collected;
    while (!frontier.empty()) {
        const auto [node, dist] = frontier.front();
        frontier.pop_front();
        if (dist >= 2) continue;
        for (const std::size_t e : adjacency_.at(node)) {
            collected.insert(e);
            for (const std::string& next : {edges_[e].subject, edges_[e].object}) {
                if (visited.insert(next).second) frontier.emplace_back(next, dist + 1);
            }
        }
    }

    const std::vector<float> qv = embedder.embed(query);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(collected.size());
    for (const std::size_t e : collected) {
        scored.emplace_back(cosine_similarity(qv, embedder.embed(edges_[e].render())), e);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return edges_[a.second].tid < edges_[b.second].tid;
    });
    if (scored.size() > k) scored.resize(k);

    std::vector<Triplet> out;
    out.reserve(scored.size());
    for (const auto& [score, e] : scored) out.push_back(edges_[e]);
    return out;
}

} // namespace factrag
