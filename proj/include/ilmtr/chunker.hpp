#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ilmtr {

// Byte range [begin, end) of one token inside the text it was counted on.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const TokenSpan&) const = default;
};

// Seam for swapping in a model tokenizer. Implementations must be
// deterministic and must never produce a token that crosses whitespace.
class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
    std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

// Default counter: every maximal run of non-space, non-punctuation bytes is
// one token and every ASCII punctuation byte is a token on its own.
class WordPunctCounter final : public TokenCounter {
public:
    std::vector<TokenSpan> tokenize(std::string_view text) const override;
};

const TokenCounter& default_token_counter();

std::size_t count_tokens(std::string_view text);

// Token strings of `text` under the default counter.
std::vector<std::string> tokens_of(std::string_view text);

// Prefix of `text` holding at most `max_tokens` default-counter tokens.
std::string truncate_to_tokens(const std::string& text, std::size_t max_tokens);

// Sentences are cut after '.', '!' or '?' (plus any closing quotes or
// brackets) when whitespace or end of text follows, unless the word ending
// there is a known abbreviation. Returned sentences are trimmed, and internal
// whitespace runs are collapsed to single spaces.
std::vector<std::string> split_sentences(std::string_view raw);

const std::vector<std::string>& abbreviation_guard_list();

struct Chunk {
    std::size_t index = 0;
    std::string text;
    std::size_t token_count = 0;
    std::size_t first_sentence = 0;
    std::size_t last_sentence = 0;
    // Set on the pieces of a single sentence longer than the limit.
    bool oversize = false;

    bool operator==(const Chunk&) const = default;
};

// Greedy packing: sentences go into the current chunk in order; one that
// would overflow starts the next chunk. A sentence longer than `max_tokens`
// is cut at token boundaries into standalone oversize pieces.
std::vector<Chunk> chunk_text(std::string_view raw, std::size_t max_tokens,
                              const TokenCounter& counter = default_token_counter());

}  // namespace ilmtr
