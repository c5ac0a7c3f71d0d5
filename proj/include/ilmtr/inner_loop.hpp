#pragma once

#include "ilmtr/config.hpp"
#include "ilmtr/gateway.hpp"
#include "ilmtr/retrieval_index.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ilmtr {

// Dynamic-programming longest common subsequence length, O(|a||b|) time
// and O(min) memory.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Tokens the convergence check compares: default-counter tokens for word
// granularity, single bytes for character granularity.
std::vector<std::string> lcs_tokens(std::string_view text, LcsGranularity granularity);

// lcs / max(len(prev), len(curr)); 1.0 when both are empty.
double convergence_ratio(std::string_view prev, std::string_view curr,
                         LcsGranularity granularity = LcsGranularity::word);

struct ShortTermMemory {
    std::string text;
    int round = 0;
};

// Inner-loop answer prompt: fixed system prompt with the worked example,
// user prompt with the retrieved text, the memory and the question.
ChatRequest build_loop_prompt(const RetrievedInfo& retrieved, const ShortTermMemory& stm, std::string_view query,
                              const AnswerModelParams& params);

// Single-shot answer prompt (no loop, no memory).
ChatRequest build_single_shot_prompt(const RetrievedInfo& retrieved, std::string_view query,
                                     const AnswerModelParams& params);

// Query used for retrieval in a round after the first.
std::string rewrite_query(std::string_view query, std::string_view stm_text);

struct LoopRound {
    int round = 0;
    std::string retrieval_query;
    std::vector<NodeId> retrieved;
    std::string answer;
    std::string stm_text;
    // Against the previous round's STM (round 1 compares with the empty STM).
    double convergence_ratio = 0.0;
};

struct LoopError {
    int round = 0;
    std::string message;
};

struct LoopTrace {
    std::vector<LoopRound> rounds;
    bool converged = false;
    std::string final_answer;
    std::optional<LoopError> error;
};

// Round 1 retrieves on the query alone. Every round asks the answer model,
// overwrites the STM with its reply and, from round 2 on, compares it with
// the previous STM. Stops on ratio >= threshold or after max_rounds. With
// max_rounds == 1 the single-shot prompt is used. Backend failures end the
// loop and are reported in trace.error instead of being thrown.
LoopTrace run_inner_loop(const RetrievalIndex& index, std::string_view query, const RunConfig& config,
                         ChatBackend& answer_backend, EmbeddingBackend& embedder);

}  // namespace ilmtr
