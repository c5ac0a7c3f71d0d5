#include "ilmtr/inner_loop.hpp"

#include "ilmtr/chunker.hpp"
#include "ilmtr/dual_summary.hpp"
#include "ilmtr/prompts.hpp"

#include <algorithm>

namespace ilmtr {

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

std::vector<std::string> lcs_tokens(std::string_view text, LcsGranularity granularity) {
    if (granularity == LcsGranularity::word) return tokens_of(text);
    std::vector<std::string> out;
    out.reserve(text.size());
    for (char c : text) out.emplace_back(1, c);
    return out;
}

double convergence_ratio(std::string_view prev, std::string_view curr, LcsGranularity granularity) {
    const auto a = lcs_tokens(prev, granularity);
    const auto b = lcs_tokens(curr, granularity);
    const auto longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    return static_cast<double>(lcs_length(a, b)) / static_cast<double>(longest);
}

ChatRequest build_loop_prompt(const RetrievedInfo& retrieved, const ShortTermMemory& stm, std::string_view query,
                              const AnswerModelParams& params) {
    return ChatRequest{prompts::kInnerLoopSystem,
                       prompts::inner_loop_user(retrieved.assembled_text, stm.text, query), params};
}

ChatRequest build_single_shot_prompt(const RetrievedInfo& retrieved, std::string_view query,
                                     const AnswerModelParams& params) {
    return ChatRequest{prompts::kQuestionAnsweringSystem, prompts::single_shot_user(retrieved.assembled_text, query),
                       params};
}

std::string rewrite_query(std::string_view query, std::string_view stm_text) {
    std::string out(query);
    out += '\n';
    out += stm_text;
    return out;
}

LoopTrace run_inner_loop(const RetrievalIndex& index, std::string_view query, const RunConfig& config,
                         ChatBackend& answer_backend, EmbeddingBackend& embedder) {
    LoopTrace trace;
    ShortTermMemory stm;
    const int max_rounds = std::max(1, config.loop.max_rounds);
    const bool single_shot = max_rounds == 1;

    for (int round = 1; round <= max_rounds; ++round) {
        LoopRound r;
        r.round = round;
        r.retrieval_query = round == 1 ? std::string(query) : rewrite_query(query, stm.text);
        try {
            const auto info = collapsed_retrieve(index, r.retrieval_query, embedder, config.retriever);
            for (const auto& hit : info.hits) r.retrieved.push_back(hit.id);
            const auto request = single_shot ? build_single_shot_prompt(info, query, config.answer)
                                             : build_loop_prompt(info, stm, query, config.answer);
            r.answer = answer_backend.chat(request);
        } catch (const std::exception& e) {
            trace.error = LoopError{round, e.what()};
            break;
        }
        r.stm_text = truncate_to_tokens(r.answer, static_cast<std::size_t>(config.answer.max_tokens));
        r.convergence_ratio = convergence_ratio(stm.text, r.stm_text, config.loop.lcs_granularity);
        stm = ShortTermMemory{r.stm_text, round};
        trace.rounds.push_back(std::move(r));
        if (round >= 2 && trace.rounds.back().convergence_ratio >= config.loop.convergence_threshold) {
            trace.converged = true;
            break;
        }
    }
    trace.final_answer = stm.text;
    return trace;
}

}  // namespace ilmtr
