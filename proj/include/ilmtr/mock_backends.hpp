#pragma once

#include "ilmtr/gateway.hpp"

#include <atomic>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ilmtr {

// Replays a fixed queue of replies. A std::nullopt entry makes that call
// fail with a transport error. Records every request it receives.
class ScriptedChatBackend final : public ChatBackend {
public:
    explicit ScriptedChatBackend(std::vector<std::optional<std::string>> script);
    explicit ScriptedChatBackend(const std::vector<std::string>& script);

    std::string chat(const ChatRequest& request) override;

    std::size_t calls() const;
    std::vector<ChatRequest> requests() const;

private:
    mutable std::mutex mu_;
    std::deque<std::optional<std::string>> script_;
    std::vector<ChatRequest> requests_;
};

// Deterministic stand-in for an LLM. Sentences of the prompt's context that
// contain any needle pattern (case-insensitive) are the "surprising" ones:
//  - summary role: the lead non-matching sentences become the summary; the
//    matching ones are listed under (Surprise): when the dual-summary prompt
//    is used, and dropped under the plain summary prompt;
//  - answer role: the matching sentences are echoed in prompt order.
class ExtractiveChatBackend final : public ChatBackend {
public:
    explicit ExtractiveChatBackend(std::vector<std::string> needle_patterns, std::size_t lead_sentences = 2);

    std::string chat(const ChatRequest& request) override;
    std::size_t calls() const { return calls_.load(); }

    static constexpr const char* kNoAnswer = "No relevant information was found.";

private:
    bool matches(const std::string& sentence) const;

    std::vector<std::string> patterns_;
    std::size_t lead_sentences_;
    std::atomic<std::size_t> calls_{0};
};

// Vocabulary-hashed bag of words: lowercase alphanumeric words are hashed
// (FNV-1a) into `dim` buckets, counted, and L2-normalized.
class HashedBagOfWordsEmbedding final : public EmbeddingBackend {
public:
    explicit HashedBagOfWordsEmbedding(std::size_t dim = 256);

    std::vector<Embedding> embed(std::span<const std::string> texts) override;
    Embedding embed_one(const std::string& text) const;

    std::size_t dim() const { return dim_; }
    std::size_t bucket_of(const std::string& word) const;
    std::size_t calls() const { return calls_.load(); }

private:
    std::size_t dim_;
    std::atomic<std::size_t> calls_{0};
};

// Lowercased words as the mock embedding sees them.
std::vector<std::string> bag_of_words_tokens(const std::string& text);

Backends make_mock_backends(const RunConfig& config);

}  // namespace ilmtr
