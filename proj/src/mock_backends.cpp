#include "ilmtr/mock_backends.hpp"

#include "ilmtr/chunker.hpp"
#include "ilmtr/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <sstream>

namespace ilmtr {
namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Retrieval headers ("### node ...") are dropped before sentence splitting.
std::string strip_headers(std::string_view text) {
    std::string out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("### ", 0) == 0) continue;
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace

ScriptedChatBackend::ScriptedChatBackend(std::vector<std::optional<std::string>> script)
    : script_(script.begin(), script.end()) {}

ScriptedChatBackend::ScriptedChatBackend(const std::vector<std::string>& script)
    : script_(script.begin(), script.end()) {}

std::string ScriptedChatBackend::chat(const ChatRequest& request) {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (script_.empty())
        throw GatewayError(GatewayError::Kind::script_exhausted,
                           "scripted chat backend exhausted after " + std::to_string(requests_.size() - 1) + " calls");
    auto next = std::move(script_.front());
    script_.pop_front();
    if (!next) throw GatewayError(GatewayError::Kind::transport, "scripted transport failure");
    return *next;
}

std::size_t ScriptedChatBackend::calls() const {
    std::lock_guard lock(mu_);
    return requests_.size();
}

std::vector<ChatRequest> ScriptedChatBackend::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

ExtractiveChatBackend::ExtractiveChatBackend(std::vector<std::string> needle_patterns, std::size_t lead_sentences)
    : lead_sentences_(std::max<std::size_t>(1, lead_sentences)) {
    for (auto& p : needle_patterns)
        if (!p.empty()) patterns_.push_back(lower(p));
}

bool ExtractiveChatBackend::matches(const std::string& sentence) const {
    const auto l = lower(sentence);
    return std::any_of(patterns_.begin(), patterns_.end(),
                       [&](const std::string& p) { return l.find(p) != std::string::npos; });
}

std::string ExtractiveChatBackend::chat(const ChatRequest& request) {
    ++calls_;
    if (request.role() == ChatRole::summary) {
        std::string context = request.user_prompt;
        const bool dual = request.system_prompt == prompts::kDualSummarySystem;
        if (!dual && context.rfind(prompts::kPlainSummaryUserPrefix, 0) == 0)
            context = context.substr(prompts::kPlainSummaryUserPrefix.size());

        std::vector<std::string> lead, surprising;
        const auto sentences = split_sentences(context);
        for (const auto& s : sentences) {
            if (matches(s)) surprising.push_back(s);
            else if (lead.size() < lead_sentences_) lead.push_back(s);
        }
        if (lead.empty() && !sentences.empty()) lead.push_back(sentences.front());
        const auto cap = static_cast<std::size_t>(std::max(1, request.max_tokens()));
        const std::string summary = truncate_to_tokens(join(lead, " "), cap);
        if (!dual) return summary.empty() ? std::string("(empty)") : summary;
        return "(Summary): " + summary + "\n\n(Surprise): " + join(surprising, " ");
    }

    std::string context;
    if (auto loop = prompts::parse_inner_loop_user(request.user_prompt)) {
        context = loop->retrieved + "\n" + loop->memory;
    } else if (auto single = prompts::parse_single_shot_user(request.user_prompt)) {
        context = single->context;
    } else {
        context = request.user_prompt;
    }
    std::vector<std::string> found;
    for (const auto& s : split_sentences(strip_headers(context)))
        if (matches(s) && std::find(found.begin(), found.end(), s) == found.end()) found.push_back(s);
    if (found.empty()) return kNoAnswer;
    return join(found, " ");
}

std::vector<std::string> bag_of_words_tokens(const std::string& text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
        words.push_back(lower(std::string_view(text).substr(i, j - i)));
        i = j;
    }
    return words;
}

HashedBagOfWordsEmbedding::HashedBagOfWordsEmbedding(std::size_t dim) : dim_(dim) {}

std::size_t HashedBagOfWordsEmbedding::bucket_of(const std::string& word) const {
    return static_cast<std::size_t>(fnv1a(word) % dim_);
}

Embedding HashedBagOfWordsEmbedding::embed_one(const std::string& text) const {
    if (text.empty()) throw GatewayError(GatewayError::Kind::invalid_request, "cannot embed an empty text");
    std::vector<double> v(dim_, 0.0);
    auto words = bag_of_words_tokens(text);
    if (words.empty()) words.push_back(text);
    for (const auto& w : words) v[bucket_of(w)] += 1.0;
    return make_embedding(std::move(v));
}

std::vector<Embedding> HashedBagOfWordsEmbedding::embed(std::span<const std::string> texts) {
    ++calls_;
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

Backends make_mock_backends(const RunConfig& config) {
    auto chat = std::make_shared<ExtractiveChatBackend>(config.mock.needle_patterns);
    return Backends{chat, chat, std::make_shared<HashedBagOfWordsEmbedding>()};
}

}  // namespace ilmtr
