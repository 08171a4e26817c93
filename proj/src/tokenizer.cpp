#include "factrag/tokenizer.hpp"

#include <cctype>

namespace factrag {

namespace {

inline bool is_space_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

} // namespace

std::vector<TokenSpan> scan_tokens(std::string_view text) {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
            continue;
        }
        if (is_word_byte(c)) {
            std::size_t j = i + 1;
            while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            out.push_back({i, j, true});
            i = j;
        } else {
            out.push_back({i, i + 1, false});
            ++i;
        }
    }
    return out;
}

int count_tokens(std::string_view text) {
    int count = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
        } else if (is_word_byte(c)) {
            ++count;
            while (i < n && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
        } else {
            ++count;
            ++i;
        }
    }
    return count;
}

std::vector<std::string> word_tokens_lower(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& span : scan_tokens(text)) {
        if (!span.word) continue;
        std::string word(text.substr(span.begin, span.end - span.begin));
        for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(std::move(word));
    }
    return out;
}

std::string normalize_ws(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        if (is_space_byte(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(ch);
        }
    }
    return out;
}

std::vector<TextSpan> split_paragraphs(std::string_view text) {
    std::vector<TextSpan> out;
    std::size_t pos = 0;
    const std::size_t n = text.size();
    while (pos < n) {
        // skip blank lines
        std::size_t start = pos;
        bool blank = true;
        std::size_t line_end = text.find('\n', pos);
        if (line_end == std::string_view::npos) line_end = n;
        for (std::size_t i = pos; i < line_end; ++i) {
            if (!is_space_byte(static_cast<unsigned char>(text[i]))) {
                blank = false;
                break;
            }
        }
        if (blank) {
            pos = line_end < n ? line_end + 1 : n;
            continue;
        }
        // extend until a blank line or end of text
        std::size_t end = start;
        while (end < n) {
            std::size_t next = text.find('\n', end);
            if (next == std::string_view::npos) {
                end = n;
                break;
            }
            bool line_blank = true;
            std::size_t after = text.find('\n', next + 1);
            if (after == std::string_view::npos) after = n;
            for (std::size_t i = next + 1; i < after; ++i) {
                if (!is_space_byte(static_cast<unsigned char>(text[i]))) {
                    line_blank = false;
                    break;
                }
            }
            if (line_blank && next + 1 <= n) {
                end = next;
                break;
            }
            end = after;
        }
        out.push_back({start, end});
        pos = end;
    }
    return out;
}

std::vector<std::size_t> sentence_end_tokens(std::string_view text,
                                             const std::vector<TokenSpan>& tokens) {
    std::vector<std::size_t> ends;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].word) continue;
        char c = text[tokens[i].begin];
        if (c == '.' || c == '!' || c == '?') {
            // absorb a run of closing punctuation: "...", "?!", quotes
            std::size_t j = i;
            while (j + 1 < tokens.size() && !tokens[j + 1].word) {
                char d = text[tokens[j + 1].begin];
                if (d == '.' || d == '!' || d == '?' || d == '"' || d == '\'' || d == ')') {
                    ++j;
                } else {
                    break;
                }
            }
            ends.push_back(j);
            i = j;
        }
    }
    return ends;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t hash = seed;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string fnv1a64_hex(std::string_view data) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

} // namespace factrag
