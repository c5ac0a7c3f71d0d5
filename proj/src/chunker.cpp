#include "ilmtr/chunker.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace ilmtr {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_punct(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u) != 0;
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// The word (including interior dots, e.g. "e.g") that ends right before the
// terminal period at `dot`.
bool ends_with_abbreviation(std::string_view text, std::size_t dot) {
    std::size_t start = dot;
    while (start > 0 && !is_space(text[start - 1]) && text[start - 1] != '(' && text[start - 1] != '"')
        --start;
    if (start == dot) return false;
    const std::string word = lower(text.substr(start, dot - start));
    const auto& guard = abbreviation_guard_list();
    return std::find(guard.begin(), guard.end(), word) != guard.end();
}

}  // namespace

std::vector<TokenSpan> WordPunctCounter::tokenize(std::string_view text) const {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (is_space(c)) {
            ++i;
        } else if (is_punct(c)) {
            spans.push_back({i, i + 1});
            ++i;
        } else {
            std::size_t j = i + 1;
            while (j < text.size() && !is_space(text[j]) && !is_punct(text[j])) ++j;
            spans.push_back({i, j});
            i = j;
        }
    }
    return spans;
}

const TokenCounter& default_token_counter() {
    static const WordPunctCounter counter;
    return counter;
}

std::size_t count_tokens(std::string_view text) { return default_token_counter().count(text); }

std::vector<std::string> tokens_of(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& span : default_token_counter().tokenize(text))
        out.emplace_back(text.substr(span.begin, span.end - span.begin));
    return out;
}

std::string truncate_to_tokens(const std::string& text, std::size_t max_tokens) {
    const auto spans = default_token_counter().tokenize(text);
    if (spans.size() <= max_tokens) return text;
    if (max_tokens == 0) return {};
    return text.substr(0, spans[max_tokens - 1].end);
}

const std::vector<std::string>& abbreviation_guard_list() {
    static const std::vector<std::string> list = {
        "mr",   "mrs",  "ms",   "dr",   "prof", "sr",   "jr",   "st",   "mt",   "vs",   "etc",
        "e.g",  "i.e",  "cf",   "al",   "inc",  "ltd",  "co",   "corp", "no",   "vol",  "fig",
        "a.m",  "p.m",  "u.s",  "u.k",  "jan",  "feb",  "mar",  "apr",  "jun",  "jul",  "aug",
        "sep",  "sept", "oct",  "nov",  "dec",  "approx", "dept", "est", "gen", "gov", "lt",
        "capt", "col",  "sgt",
    };
    return list;
}

std::vector<std::string> split_sentences(std::string_view raw) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    std::size_t i = 0;
    auto emit = [&](std::size_t end) {
        auto s = collapse_whitespace(raw.substr(start, end - start));
        if (!s.empty()) sentences.push_back(std::move(s));
        start = end;
    };
    while (i < raw.size()) {
        if (!is_terminal(raw[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < raw.size() && is_terminal(raw[j])) ++j;
        while (j < raw.size() && is_closer(raw[j])) ++j;
        const bool boundary = j == raw.size() || is_space(raw[j]);
        if (boundary && !(raw[i] == '.' && j == i + 1 && ends_with_abbreviation(raw, i))) emit(j);
        i = j;
    }
    emit(raw.size());
    return sentences;
}

std::vector<Chunk> chunk_text(std::string_view raw, std::size_t max_tokens, const TokenCounter& counter) {
    if (max_tokens == 0) throw std::invalid_argument("chunk_text: max_tokens must be >= 1");
    const auto sentences = split_sentences(raw);
    std::vector<Chunk> chunks;

    Chunk current;
    bool open = false;
    auto close = [&] {
        if (!open) return;
        current.index = chunks.size();
        chunks.push_back(std::move(current));
        current = Chunk{};
        open = false;
    };

    for (std::size_t s = 0; s < sentences.size(); ++s) {
        const std::string& sentence = sentences[s];
        const auto spans = counter.tokenize(sentence);
        const std::size_t n = spans.size();
        if (n > max_tokens) {
            close();
            for (std::size_t first = 0; first < n; first += max_tokens) {
                const std::size_t last = std::min(n, first + max_tokens) - 1;
                Chunk piece;
                piece.text = sentence.substr(spans[first].begin, spans[last].end - spans[first].begin);
                piece.token_count = last - first + 1;
                piece.first_sentence = piece.last_sentence = s;
                piece.oversize = true;
                piece.index = chunks.size();
                chunks.push_back(std::move(piece));
            }
            continue;
        }
        if (open && current.token_count + n > max_tokens) close();
        if (!open) {
            current.first_sentence = s;
            open = true;
        } else {
            current.text += ' ';
        }
        current.text += sentence;
        current.token_count += n;
        current.last_sentence = s;
    }
    close();
    return chunks;
}

}  // namespace ilmtr
