#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ilmtr::prompts {

// Summary model, dual (summary + surprise) variant.
extern const std::string kDualSummarySystem;

// Summary model, plain summarization used by the tree-retrieval baseline.
extern const std::string kPlainSummarySystem;
extern const std::string kPlainSummaryUserPrefix;

// Answer model without the inner loop.
extern const std::string kQuestionAnsweringSystem;

// Answer model with the inner loop, worked example included.
extern const std::string kInnerLoopSystem;

inline constexpr std::string_view kRetrievedMarker = "(Retrieved Info):";
inline constexpr std::string_view kMemoryMarker = "(Memory):";
inline constexpr std::string_view kQuestionMarker = "(Question):";
inline constexpr std::string_view kOutputMarker = "(Your Output):";

// Neutralizes section markers inside user-supplied text by inserting an
// invisible separator (U+2063) between ')' and ':'. Text without markers is
// returned unchanged.
std::string fence_markers(std::string_view text);

// "(Retrieved Info):\n<r>\n(Memory):\n<m>\n(Question):\n<q>" with every
// part fenced.
std::string inner_loop_user(std::string_view retrieved, std::string_view memory, std::string_view question);

struct LoopSections {
    std::string retrieved;
    std::string memory;
    std::string question;
};

// Inverse of inner_loop_user (fenced text is returned as fenced).
std::optional<LoopSections> parse_inner_loop_user(std::string_view user_prompt);

// "Given Context: <r> Give the best full answer to question <q>"
std::string single_shot_user(std::string_view retrieved, std::string_view question);

struct SingleShotSections {
    std::string context;
    std::string question;
};
std::optional<SingleShotSections> parse_single_shot_user(std::string_view user_prompt);

}  // namespace ilmtr::prompts
