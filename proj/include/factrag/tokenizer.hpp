#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace factrag {

/// Counting rule "whitespace_punct_v1": a token is either a maximal run of
/// alphanumeric bytes (bytes >= 0x80 count as alphanumeric, so UTF-8 text
/// tokenizes without decoding) or a single other non-whitespace character.
/// Whitespace separates tokens and is never counted. The rule is recorded in
/// every store manifest so token counts stay comparable across runs.
inline constexpr const char* kTokenizerRule = "whitespace_punct_v1";

struct TokenSpan {
    std::size_t begin = 0; // byte offset, inclusive
    std::size_t end = 0;   // byte offset, exclusive
    bool word = false;     // alphanumeric run vs single punctuation char
};

std::vector<TokenSpan> scan_tokens(std::string_view text);

int count_tokens(std::string_view text);

/// Word tokens only, lowercased (ASCII). Used by the lexical index and the
/// hash embedder.
std::vector<std::string> word_tokens_lower(std::string_view text);

/// Collapse every whitespace run to a single space and trim the ends.
std::string normalize_ws(std::string_view text);

/// Paragraphs are separated by blank lines; returns byte ranges of each
/// non-empty paragraph.
struct TextSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};
std::vector<TextSpan> split_paragraphs(std::string_view text);

/// Indices into `tokens` after which a sentence ends: a '.', '!' or '?'
/// punctuation token closes a sentence.
std::vector<std::size_t> sentence_end_tokens(std::string_view text,
                                             const std::vector<TokenSpan>& tokens);

/// FNV-1a, the hash used everywhere a stable identifier or fingerprint is
/// derived from text.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull);

std::string fnv1a64_hex(std::string_view data);

} // namespace factrag
