#include "factrag/triplet_extract.hpp"

#include <cctype>
#include <set>
#include <unordered_set>

#include "factrag/tokenizer.hpp"

namespace factrag {

namespace {

const std::unordered_set<std::string>& verb_lexicon() {
    static const std::unordered_set<std::string> verbs = {
        "is", "are", "was", "were", "has", "have", "had",
        "inhibits", "inhibit", "inhibited", "blocks", "block", "blocked",
        "treats", "treat", "treated", "causes", "cause", "caused",
        "reduces", "reduce", "reduced", "increases", "increase", "increased",
        "prevents", "prevent", "prevented", "contains", "contain", "contained",
        "binds", "bind", "bound", "activates", "activate", "activated",
        "targets", "target", "targeted", "produces", "produce", "produced",
        "metabolizes", "metabolize", "metabolized", "requires", "require", "required",
        "affects", "affect", "affected", "includes", "include", "included",
        "belongs", "belong", "belonged", "lowers", "lower", "lowered",
        "raises", "raise", "raised", "improves", "improve", "improved",
        "supports", "support", "supported", "regulates", "regulate", "regulated",
        "stimulates", "stimulate", "stimulated", "suppresses", "suppress", "suppressed",
        "triggers", "trigger", "triggered", "carries", "carry", "carried",
        "uses", "use", "used", "provides", "provide", "provided",
        "enables", "enable", "enabled", "relieves", "relieve", "relieved",
        "promotes", "promote", "promoted", "delays", "delay", "delayed",
        "extends", "extend", "extended", "converts", "convert", "converted",
        "secretes", "secrete", "secreted", "absorbs", "absorb", "absorbed",
        "releases", "release", "released", "forms", "form", "formed",
        "stores", "store", "stored", "protects", "protect", "protected",
        "damages", "damage", "damaged", "impairs", "impair", "impaired",
        "worsens", "worsen", "worsened", "mediates", "mediate", "mediated",
        "modulates", "modulate", "modulated", "interacts", "interact", "interacted",
        "counteracts", "counteract", "counteracted", "accelerates", "accelerate", "accelerated",
        "slows", "slow", "slowed", "alleviates", "alleviate", "alleviated",
        "masks", "mask", "masked", "prolongs", "prolong", "prolonged",
        "weakens", "weaken", "weakened", "strengthens", "strengthen", "strengthened",
        "disrupts", "disrupt", "disrupted", "maintains", "maintain", "maintained",
        "generates", "generate", "generated", "deactivates", "deactivate", "deactivated",
        "neutralizes", "neutralize", "neutralized", "underlies", "underlie",
        "irritates", "irritate", "irritated", "thins", "thin", "thinned",
        "yields", "yield", "yielded", "signals", "signal", "signaled",
    };
    return verbs;
}

const std::unordered_set<std::string>& modal_words() {
    static const std::unordered_set<std::string> modals = {
        "can", "may", "might", "must", "should", "could", "will", "would",
        "shall", "do", "does", "did", "not", "never",
    };
    return modals;
}

const std::unordered_set<std::string>& discourse_words() {
    static const std::unordered_set<std::string> words = {
        "however", "notably", "moreover", "furthermore", "therefore", "thus",
        "meanwhile", "additionally", "consequently", "nevertheless", "nonetheless",
        "indeed", "importantly", "interestingly", "overall", "finally",
        "similarly", "likewise", "hence", "still", "yet", "also", "often",
        "then", "instead", "conversely", "specifically", "crucially",
    };
    return words;
}

const std::unordered_set<std::string>& object_stop_words() {
    static const std::unordered_set<std::string> words = {
        "which", "that", "because", "since", "while", "although", "whereas",
        "where", "when", "who", "whom", "whose", "if", "unless", "after",
        "before", "so", "but",
    };
    return words;
}

const std::unordered_set<std::string>& preposition_words() {
    static const std::unordered_set<std::string> words = {
        "to", "with", "in", "on", "of", "for", "from", "as", "by", "into",
        "within", "through", "against",
    };
    return words;
}

bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

bool is_adverb_like(const std::string& w) {
    if (discourse_words().count(w)) return true;
    return w.size() > 3 && w.compare(w.size() - 2, 2, "ly") == 0;
}

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

struct Candidate {
    std::string mention; // original surface form, whitespace-normalized
    bool plural = false;
};

bool plural_surface(const std::string& mention) {
    // Number is judged from the final word of the surface form.
    std::size_t end = mention.size();
    while (end > 0 && !std::isalnum(static_cast<unsigned char>(mention[end - 1]))) --end;
    std::size_t begin = end;
    while (begin > 0 && std::isalnum(static_cast<unsigned char>(mention[begin - 1]))) --begin;
    const std::string w = lower_ascii(std::string_view(mention).substr(begin, end - begin));
    return w.size() > 3 && w.back() == 's' && w[w.size() - 2] != 's';
}

int pronoun_number(const std::string& w) {
    // 1 = singular, 2 = plural, 0 = not a pronoun we resolve.
    if (w == "it" || w == "he" || w == "she" || w == "this") return 1;
    if (w == "they" || w == "these" || w == "those") return 2;
    return 0;
}

struct SentenceView {
    std::string_view text;
    const std::vector<TokenSpan>* tokens;
    std::size_t begin; // token index range [begin, end)
    std::size_t end;
};

bool is_word(const SentenceView& s, std::size_t i) { return (*s.tokens)[i].word; }

std::string token_lower(const SentenceView& s, std::size_t i) {
    const TokenSpan& t = (*s.tokens)[i];
    return lower_ascii(s.text.substr(t.begin, t.end - t.begin));
}

bool intra_word_hyphen(const SentenceView& s, std::size_t i) {
    const TokenSpan& t = (*s.tokens)[i];
    if (t.word || t.end - t.begin != 1 || s.text[t.begin] != '-') return false;
    if (i == s.begin || i + 1 >= s.end) return false;
    const TokenSpan& prev = (*s.tokens)[i - 1];
    const TokenSpan& next = (*s.tokens)[i + 1];
    return prev.word && next.word && prev.end == t.begin && t.end == next.begin;
}

struct Mention {
    std::string text;
    bool indefinite = false;
    bool ok = false;
};

/// Trims a token range to an entity mention: drops leading articles,
/// discourse adverbs, and punctuation, drops trailing punctuation, modals,
/// and adverbs, then takes the covered source substring.
Mention assemble_mention(const SentenceView& s, std::size_t lo, std::size_t hi) {
    Mention m;
    while (lo < hi) {
        if (!is_word(s, lo)) {
            ++lo;
            continue;
        }
        const std::string w = token_lower(s, lo);
        if (w == "a" || w == "an") {
            m.indefinite = true;
            ++lo;
        } else if (w == "the" || is_adverb_like(w)) {
            ++lo;
        } else {
            break;
        }
    }
    while (hi > lo) {
        const std::size_t last = hi - 1;
        if (!is_word(s, last) && !intra_word_hyphen(s, last)) {
            --hi;
            continue;
        }
        const std::string w = is_word(s, last) ? token_lower(s, last) : std::string();
        if (!w.empty() && (modal_words().count(w) || is_adverb_like(w))) {
            --hi;
            continue;
        }
        break;
    }
    if (lo >= hi) return m;
    const TokenSpan& first = (*s.tokens)[lo];
    const TokenSpan& last = (*s.tokens)[hi - 1];
    m.text = normalize_ws(s.text.substr(first.begin, last.end - first.begin));
    m.ok = !m.text.empty();
    return m;
}

/// Replaces a bare-pronoun mention with the most recent prior entity of
/// matching grammatical number; entities introduced with an indefinite
/// article are not antecedent candidates.
bool resolve_pronoun(Mention& m, const std::vector<Candidate>& history) {
    const std::string w = lower_ascii(m.text);
    const int number = pronoun_number(w);
    if (number == 0) return true;
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->plural == (number == 2)) {
            m.text = it->mention;
            return true;
        }
    }
    return false;
}

} // namespace

std::string canonical_entity(std::string_view mention) {
    std::string s = lower_ascii(normalize_ws(mention));
    if (s.size() >= 4 && s.back() == 's') {
        const char prev = s[s.size() - 2];
        if (std::isalpha(static_cast<unsigned char>(prev)) && prev != 's') s.pop_back();
    }
    return s;
}

std::string link_entity(std::string_view mention, const std::map<std::string, std::string>& aliases) {
    const std::string canon = canonical_entity(mention);
    for (const auto& [alias, target] : aliases) {
        if (canonical_entity(alias) == canon) return canonical_entity(target);
    }
    return canon;
}

std::vector<Triplet> extract_triplets(const std::vector<Chunk>& chunks,
                                      const std::map<std::string, std::string>& aliases) {
    std::vector<Triplet> out;
    std::set<std::string> seen;

    for (const Chunk& chunk : chunks) {
        const std::vector<TokenSpan> tokens = scan_tokens(chunk.text);
        if (tokens.empty()) continue;
        const std::vector<std::size_t> ends = sentence_end_tokens(chunk.text, tokens);

        std::vector<Candidate> history;
        std::size_t sb = 0;
        auto next_sentence = [&](std::size_t se) {
            SentenceView s{chunk.text, &tokens, sb, se};
            sb = se;
            if (s.begin >= s.end) return;

            // Main verb: first lexicon verb with at least one token on each side.
            std::size_t v = s.end;
            for (std::size_t i = s.begin + 1; i < s.end; ++i) {
                if (is_word(s, i) && verb_lexicon().count(token_lower(s, i))) {
                    v = i;
                    break;
                }
            }
            if (v >= s.end || v + 1 >= s.end) return;

            Mention subject = assemble_mention(s, s.begin, v);
            if (!subject.ok || !resolve_pronoun(subject, history)) return;

            // Negation absorbed from the gap the subject trim discarded.
            std::string relation = token_lower(s, v);
            for (std::size_t i = v; i > s.begin; --i) {
                const std::string w = is_word(s, i - 1) ? token_lower(s, i - 1) : std::string();
                if (w == "not" || w == "never") {
                    relation = "not " + relation;
                    break;
                }
                if (!modal_words().count(w) && !is_adverb_like(w)) break;
            }

            // A single preposition straight after the verb joins the relation.
            std::size_t obj_lo = v + 1;
            if (obj_lo < s.end && is_word(s, obj_lo) && preposition_words().count(token_lower(s, obj_lo))) {
                relation += ' ';
                relation += token_lower(s, obj_lo);
                ++obj_lo;
            }

            // Object runs to the first clause break or punctuation.
            std::size_t obj_hi = obj_lo;
            while (obj_hi < s.end) {
                if (!is_word(s, obj_hi) && !intra_word_hyphen(s, obj_hi)) break;
                if (is_word(s, obj_hi) && object_stop_words().count(token_lower(s, obj_hi))) break;
                ++obj_hi;
            }

            Mention object = assemble_mention(s, obj_lo, obj_hi);
            if (!object.ok || !resolve_pronoun(object, history)) return;

            Triplet t;
            t.subject = link_entity(subject.text, aliases);
            t.relation = relation;
            t.object = link_entity(object.text, aliases);
            t.provenance = chunk.pid;
            if (t.subject.empty() || t.object.empty()) return;

            if (!subject.indefinite) history.push_back({subject.text, plural_surface(subject.text)});
            if (!object.indefinite) history.push_back({object.text, plural_surface(object.text)});

            const std::string key = t.subject + '\x1f' + t.relation + '\x1f' + t.object;
            if (seen.insert(key).second) out.push_back(std::move(t));
        };

        for (std::size_t e : ends) next_sentence(e + 1);
        if (sb < tokens.size()) next_sentence(tokens.size());
    }

    for (std::size_t i = 0; i < out.size(); ++i) out[i].tid = "TID-" + std::to_string(i + 1);
    return out;
}

} // namespace factrag
