#include "ilmtr/dual_summary.hpp"

#include "ilmtr/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

namespace ilmtr {
namespace {

bool blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && blank(s[b])) ++b;
    while (e > b && blank(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

struct MarkerHit {
    std::size_t begin;
    std::size_t end;
};

// Finds "(" ws* word ws* ")" ws* ":" starting at or after `from`.
std::optional<MarkerHit> find_marker(std::string_view text, std::string_view word, std::size_t from) {
    for (std::size_t open = text.find('(', from); open != std::string_view::npos; open = text.find('(', open + 1)) {
        std::size_t i = open + 1;
        while (i < text.size() && blank(text[i])) ++i;
        if (i + word.size() > text.size()) return std::nullopt;
        bool same = true;
        for (std::size_t k = 0; k < word.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(text[i + k])) != word[k]) {
                same = false;
                break;
            }
        }
        if (!same) continue;
        i += word.size();
        while (i < text.size() && blank(text[i])) ++i;
        if (i >= text.size() || text[i] != ')') continue;
        ++i;
        while (i < text.size() && blank(text[i])) ++i;
        if (i >= text.size() || text[i] != ':') continue;
        return MarkerHit{open, i + 1};
    }
    return std::nullopt;
}

}  // namespace

const char* to_string(ParseWarning w) {
    switch (w) {
        case ParseWarning::leading_noise: return "leading-noise";
        case ParseWarning::missing_surprise: return "missing-surprise";
    }
    return "?";
}

ChatRequest build_summary_prompt(std::string_view context, const SummaryModelParams& params) {
    if (context.empty()) throw std::invalid_argument("build_summary_prompt: empty context");
    return ChatRequest{prompts::kDualSummarySystem, std::string(context), params};
}

ChatRequest build_plain_summary_prompt(std::string_view context, const SummaryModelParams& params) {
    if (context.empty()) throw std::invalid_argument("build_plain_summary_prompt: empty context");
    return ChatRequest{prompts::kPlainSummarySystem, prompts::kPlainSummaryUserPrefix + std::string(context), params};
}

DualSummary parse_dual_summary(std::string_view reply) {
    const auto summary_marker = find_marker(reply, "summary", 0);
    if (!summary_marker) throw UnparseableReply(std::string(reply));

    DualSummary out;
    if (!trim(reply.substr(0, summary_marker->begin)).empty()) out.warnings.push_back(ParseWarning::leading_noise);

    const auto surprise_marker = find_marker(reply, "surprise", summary_marker->end);
    if (surprise_marker) {
        out.summary = trim(reply.substr(summary_marker->end, surprise_marker->begin - summary_marker->end));
        out.surprise = trim(reply.substr(surprise_marker->end));
    } else {
        out.summary = trim(reply.substr(summary_marker->end));
        out.warnings.push_back(ParseWarning::missing_surprise);
    }
    if (out.summary.empty()) throw UnparseableReply(std::string(reply));
    return out;
}

std::string serialize_dual_summary(const DualSummary& s) {
    return "(Summary): " + s.summary + "\n\n(Surprise): " + s.surprise;
}

Summarizer::Summarizer(ChatBackend& backend, SummaryModelParams params, int summary_max_tokens, bool dual)
    : backend_(backend), params_(params), dual_(dual) {
    params_.n_predict = std::min(params_.n_predict, summary_max_tokens);
}

ChatRequest Summarizer::request_for(std::string_view text) const {
    return dual_ ? build_summary_prompt(text, params_) : build_plain_summary_prompt(text, params_);
}

DualSummary Summarizer::summarize(std::string_view text) const {
    const auto reply = backend_.chat(request_for(text));
    if (dual_) return parse_dual_summary(reply);
    auto summary = trim(reply);
    if (summary.empty()) throw UnparseableReply(reply);
    return DualSummary{std::move(summary), {}, {}};
}

}  // namespace ilmtr
