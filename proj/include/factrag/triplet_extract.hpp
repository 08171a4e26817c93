#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "factrag/context.hpp"
#include "factrag/corpus_store.hpp"

namespace factrag {

/// Lowercase, trim, collapse inner whitespace, and singularize a trailing
/// plural 's'. Idempotent: canonical_entity(canonical_entity(x)) == x.
std::string canonical_entity(std::string_view mention);

/// Canonicalizes and then applies the alias table (alias -> canonical form,
/// matched case-insensitively on the canonicalized mention).
std::string link_entity(std::string_view mention, const std::map<std::string, std::string>& aliases);

/// Rule-based subject-verb-object extraction over chunk sentences:
///   1. replace pronouns with the most recent prior entity of matching
///      grammatical number,
///   2. match one SVO pattern per sentence against a verb lexicon,
///   3. link mentions through the alias table,
///   4. canonicalize both entities.
/// Sentences with no SVO pattern are skipped. Duplicate (s, r, o) triples
/// are emitted once, keeping the first provenance pid. TIDs are assigned
/// sequentially as "TID-<n>" starting at 1.
std::vector<Triplet> extract_triplets(const std::vector<Chunk>& chunks,
                                      const std::map<std::string, std::string>& aliases = {});

} // namespace factrag
