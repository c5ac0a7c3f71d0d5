#include "ilmtr/prompts.hpp"

#include <array>

namespace ilmtr::prompts {

const std::string kDualSummarySystem =
    "I will give you context. Most of it could be about the same things, but there may be some abnormal "
    "information. An surprising sentence is not related to most of the other content. You should summarize the "
    "context with the necessary information and also include any surprising information you think. Don't return "
    "any unrelated words.\n"
    "\n"
    "Always and only return your answer with the following format, just list the fact based on given text, no "
    "comments, use different sentences to describe different facts:\n"
    "\n"
    "(Summary): Your Summary\n"
    "\n"
    "(Surprise): Surprising Information";

const std::string kPlainSummarySystem =
    "You are a reader who can summarize the given text while including important details. Do not provide any "
    "comments, just give the summary.";

const std::string kPlainSummaryUserPrefix =
    "Write a summary of the following context, just including the most important details: ";

const std::string kQuestionAnsweringSystem = "You are Question Answering Portal.";

const std::string kInnerLoopSystem =
    "You will be given some Retrieved Info and memory, and you will use this information to answer a question. "
    "If you can't answer the question, you can write something related to the question to help others answer "
    "it.\n"
    "(Retrieved Info):\n"
    "a2 = 1\n"
    "(Memory):\n"
    "a1 = a2+a3\n"
    "(Question):\n"
    "What is the value of a1\n"
    "(Your Output):\n"
    "a1 = a2 + a3. a2=1. We need to find the value of a3.\n"
    "\n"
    "Keep your output short and don't return any unrelated words.";

namespace {

constexpr std::array<std::string_view, 4> kMarkers = {kRetrievedMarker, kMemoryMarker, kQuestionMarker,
                                                      kOutputMarker};
constexpr std::string_view kSentinel = "\xE2\x81\xA3";
constexpr std::string_view kGivenContext = "Given Context: ";
constexpr std::string_view kGiveBest = " Give the best full answer to question ";

}  // namespace

std::string fence_markers(std::string_view text) {
    std::string out(text);
    for (auto marker : kMarkers) {
        const auto head = marker.substr(0, marker.size() - 1);  // without ':'
        std::size_t pos = 0;
        while ((pos = out.find(marker, pos)) != std::string::npos) {
            out.insert(pos + head.size(), kSentinel);
            pos += marker.size() + kSentinel.size();
        }
    }
    return out;
}

std::string inner_loop_user(std::string_view retrieved, std::string_view memory, std::string_view question) {
    std::string out;
    out += kRetrievedMarker;
    out += '\n';
    out += fence_markers(retrieved);
    out += '\n';
    out += kMemoryMarker;
    out += '\n';
    out += fence_markers(memory);
    out += '\n';
    out += kQuestionMarker;
    out += '\n';
    out += fence_markers(question);
    return out;
}

std::optional<LoopSections> parse_inner_loop_user(std::string_view p) {
    const std::string head = std::string(kRetrievedMarker) + "\n";
    const std::string mem = "\n" + std::string(kMemoryMarker) + "\n";
    const std::string q = "\n" + std::string(kQuestionMarker) + "\n";
    if (p.substr(0, head.size()) != head) return std::nullopt;
    const auto m = p.find(mem, head.size() - 1);
    if (m == std::string_view::npos) return std::nullopt;
    const auto qpos = p.find(q, m + mem.size() - 1);
    if (qpos == std::string_view::npos) return std::nullopt;
    // Markers inside sections are fenced, so a second unfenced marker means
    // the prompt was not produced by inner_loop_user.
    if (p.find(mem, m + 1) != std::string_view::npos || p.find(q, qpos + 1) != std::string_view::npos)
        return std::nullopt;
    LoopSections s;
    s.retrieved = std::string(p.substr(head.size(), m - head.size()));
    s.memory = std::string(p.substr(m + mem.size(), qpos - m - mem.size()));
    s.question = std::string(p.substr(qpos + q.size()));
    return s;
}

std::string single_shot_user(std::string_view retrieved, std::string_view question) {
    std::string out(kGivenContext);
    out += retrieved;
    out += kGiveBest;
    out += question;
    return out;
}

std::optional<SingleShotSections> parse_single_shot_user(std::string_view p) {
    if (p.substr(0, kGivenContext.size()) != kGivenContext) return std::nullopt;
    const auto sep = p.rfind(kGiveBest);
    if (sep == std::string_view::npos || sep < kGivenContext.size()) return std::nullopt;
    SingleShotSections s;
    s.context = std::string(p.substr(kGivenContext.size(), sep - kGivenContext.size()));
    s.question = std::string(p.substr(sep + kGiveBest.size()));
    return s;
}

}  // namespace ilmtr::prompts
