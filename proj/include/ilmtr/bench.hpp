#pragma once

#include "ilmtr/config.hpp"
#include "ilmtr/gateway.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ilmtr {

class BenchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NiahCase {
    std::string id;
    // "niah" or a qa task name.
    std::string task = "niah";
    std::size_t target_tokens = 0;
    // Token count of the truncated filler (needles excluded).
    std::size_t haystack_tokens = 0;
    std::vector<std::string> needles;
    double depth_percent = 0.0;
    // Token position of each needle in `text`, strictly increasing.
    std::vector<std::size_t> insertion_offsets;
    // Sentence index of each needle in split_sentences(text).
    std::vector<std::size_t> needle_sentence_indices;
    std::string question;
    std::vector<std::string> expected_keywords;
    // Truncated filler, sentences joined by single spaces.
    std::string filler;
    std::string text;

    bool operator==(const NiahCase&) const = default;
};

inline constexpr std::string_view kPizzaQuestion =
    "What is the first letter of each secret ingredient needed to build the perfect pizza?";
const std::vector<std::string>& pizza_needles();
const std::vector<std::string>& pizza_keywords();

// Keeps whole filler sentences while the running token count stays within
// target_tokens, then inserts the needles at consecutive sentence boundaries
// (one filler sentence apart) whose mean token offset is closest to
// depth_percent of the truncated haystack. Placement is deterministic; the
// seed only tags the case id.
NiahCase generate_niah_case(std::string_view corpus, const std::vector<std::string>& needles, double depth_percent,
                            std::size_t target_tokens, std::uint64_t seed);

// Leading whole sentences of `corpus` whose token total stays within
// target_tokens. Throws BenchError if the corpus has fewer tokens than that.
std::vector<std::string> truncate_corpus(std::string_view corpus, std::size_t target_tokens);

// Puts needle i in front of filler sentence boundaries[i] (a boundary equal
// to filler.size() means the end). Boundaries must be non-decreasing; equal
// boundaries keep the needles in order. Fills every field except id, task,
// target_tokens, depth_percent, question and expected_keywords.
NiahCase insert_needles(const std::vector<std::string>& filler, const std::vector<std::string>& needles,
                        const std::vector<std::size_t>& boundaries);

// Case-folded substring match per keyword. With m of n keywords found:
// 0 -> 1, n -> 10, otherwise m/n is mapped to the nearer of 1/3 (score 3)
// and 2/3 (score 7), ties going to 3. For n = 3 this is 0/1/2/3 -> 1/3/7/10.
int score_niah(std::string_view answer, const std::vector<std::string>& expected_keywords);

// Deterministic filler prose of at least min_tokens tokens. With a
// distractor rate r > 0, each paragraph is, with probability r, replaced by
// sentences that reuse the pizza question's vocabulary without ever naming
// a secret ingredient.
std::string synthetic_filler(std::size_t min_tokens, std::uint64_t seed, double distractor_rate = 0.0);

inline constexpr std::size_t kSyntheticFillerTokens = 60000;

enum class PipelineMode { baseline_single_shot, ilmtr_no_loop, ilmtr_full };

const char* to_string(PipelineMode mode);
std::optional<PipelineMode> parse_pipeline_mode(std::string_view text);

struct BenchResult {
    std::string case_id;
    PipelineMode mode = PipelineMode::ilmtr_full;
    std::size_t tokens = 0;
    double depth_percent = 0.0;
    int score = 1;
    int rounds_used = 0;
    std::chrono::milliseconds wall_time{0};
    std::string answer;
    std::optional<std::string> error;
};

// Backends for one case. Each case gets its own instances.
using BackendProvider = std::function<Backends(const NiahCase&)>;

// Extractive mock chat (patterns = the case needles) plus the hashed
// bag-of-words embedder.
Backends mock_backends_for(const NiahCase& c);

// Builds a tree over the case text and answers the question:
//  baseline_single_shot: plain summaries, single-shot prompt;
//  ilmtr_no_loop: dual summaries, single-shot prompt;
//  ilmtr_full: dual summaries, inner loop with config.loop settings.
// Failures are caught and recorded in the result.
BenchResult run_case(const NiahCase& c, PipelineMode mode, const RunConfig& config, const Backends& backends);

struct BenchOptions {
    std::size_t parallel = 1;
    BackendProvider provider = mock_backends_for;
};

// Results come back in suite order whatever the parallelism.
std::vector<BenchResult> run_bench(const std::vector<NiahCase>& suite, PipelineMode mode, const RunConfig& config,
                                   const BenchOptions& options = {});

// case_id,mode,tokens,depth,score,rounds,ms
std::string results_table(const std::vector<BenchResult>& results);
// tokens,depth,mean_score sorted by (tokens, depth)
std::string score_grid(const std::vector<BenchResult>& results);
// case_id,mode,error
std::string error_table(const std::vector<BenchResult>& results);

// Writes results.csv, grid.csv and errors.csv into `dir` (created if
// missing). Throws BenchError if `dir` exists and is not a directory or a
// file cannot be written.
void write_reports(const std::vector<BenchResult>& results, const std::filesystem::path& dir);

// Suite file: INI-like sections, each producing a group of cases.
//   [niah]      tokens, depths, needles (| separated), question,
//               keywords (| separated), filler (path), seed, distractor_rate
//   [babilong]  tasks (qa1..qa5, comma separated), tokens, cases, seed,
//               filler, distractor_rate
// Lists of numbers are comma separated. Relative filler paths resolve
// against `base_dir`. An empty file yields no cases.
std::vector<NiahCase> parse_suite(std::string_view text, const std::filesystem::path& base_dir = {});
std::vector<NiahCase> load_suite(const std::filesystem::path& path);

}  // namespace ilmtr
