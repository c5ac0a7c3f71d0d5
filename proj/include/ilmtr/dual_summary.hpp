#pragma once

#include "ilmtr/config.hpp"
#include "ilmtr/gateway.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ilmtr {

enum class ParseWarning { leading_noise, missing_surprise };

const char* to_string(ParseWarning w);

struct DualSummary {
    std::string summary;
    std::string surprise;
    std::vector<ParseWarning> warnings;

    bool operator==(const DualSummary&) const = default;
};

class UnparseableReply : public std::runtime_error {
public:
    explicit UnparseableReply(std::string raw)
        : std::runtime_error("summary reply has no usable (Summary): section"), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

// Dual-summary request: the system prompt is the fixed summary+surprise
// instruction and the user prompt is `context` untouched.
ChatRequest build_summary_prompt(std::string_view context, const SummaryModelParams& params);

// Plain summarization request used by the baseline tree.
ChatRequest build_plain_summary_prompt(std::string_view context, const SummaryModelParams& params);

// Splits a reply on the first "(Summary):" marker and the first "(Surprise):"
// after it. Markers match case-insensitively and tolerate blanks inside the
// parentheses and before the colon.
DualSummary parse_dual_summary(std::string_view reply);

// Canonical emission format, the exact layout the prompt asks for.
std::string serialize_dual_summary(const DualSummary& summary);

class Summarizer {
public:
    // `summary_max_tokens` caps the generated summary through the request's
    // n_predict. With `dual` false the plain prompt is used and the surprise
    // channel stays empty.
    Summarizer(ChatBackend& backend, SummaryModelParams params, int summary_max_tokens, bool dual = true);

    DualSummary summarize(std::string_view text) const;
    ChatRequest request_for(std::string_view text) const;
    bool dual() const { return dual_; }

private:
    ChatBackend& backend_;
    SummaryModelParams params_;
    bool dual_;
};

}  // namespace ilmtr
