#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ilmtr {

struct EndpointParams {
    std::string url;
    std::string model;
    std::string api_key;

    bool operator==(const EndpointParams&) const = default;
};

// Sampling parameters of the model that produces the final answer.
struct AnswerModelParams {
    double temperature = 0.0;
    double frequency_penalty = 1.2;
    int max_tokens = 200;

    bool operator==(const AnswerModelParams&) const = default;
};

// Sampling parameters of the model that writes chunk and cluster summaries.
// Only temperature, frequency_penalty and the token cap travel over the
// OpenAI-compatible wire; the llama.cpp sampler fields are kept for record.
struct SummaryModelParams {
    double temperature = 0.2;
    double repeat_penalty = 1.18;
    int repeat_last_n = 256;
    int top_k = 40;
    double top_p = 0.95;
    double min_p = 0.05;
    int n_predict = 1055;
    int n_probs = 0;
    double typical_p = 1.0;
    double tfs_z = 1.0;
    int mirostat = 0;
    double mirostat_eta = 0.1;
    double mirostat_tau = 5.0;
    double presence_penalty = 0.0;
    double frequency_penalty = 0.0;
    bool penalize_newline = false;

    bool operator==(const SummaryModelParams&) const = default;
};

struct RetrieverParams {
    int chunk_max_tokens = 600;
    int summary_max_tokens = 300;
    int retrieval_top_k = 10;
    int retrieval_token_budget = 2000;
    int min_layer_size = 5;
    double soft_assign_threshold = 0.1;
    // Effective cap is min(bic_k_max, n_nodes - 1).
    int bic_k_max = 50;
    std::uint64_t rng_seed = 42;

    bool operator==(const RetrieverParams&) const = default;
};

enum class LcsGranularity { word, character };

struct LoopParams {
    int max_rounds = 5;
    double convergence_threshold = 0.9;
    LcsGranularity lcs_granularity = LcsGranularity::word;

    bool operator==(const LoopParams&) const = default;
};

struct MockParams {
    // Case-insensitive substrings the extractive mock treats as surprising.
    std::vector<std::string> needle_patterns{"secret ingredient"};

    bool operator==(const MockParams&) const = default;
};

struct RunConfig {
    EndpointParams answer_endpoint;
    AnswerModelParams answer;
    EndpointParams summary_endpoint;
    SummaryModelParams summary;
    EndpointParams embedding_endpoint;
    RetrieverParams retriever;
    LoopParams loop;
    MockParams mock;

    bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::runtime_error {
public:
    enum class Kind { missing_file, malformed, unknown_key, out_of_range };

    ConfigError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

const char* to_string(ConfigError::Kind kind);

// Parses the sectioned key-value format:
//
//   [retriever]
//   chunk_max_tokens = 600
//
// Keys may also be written fully qualified ("retriever.chunk_max_tokens")
// outside a section. Overrides are "section.key=value" strings applied after
// the text. The result is validated before it is returned.
RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

std::string serialize_config(const RunConfig& config);

// Throws ConfigError(out_of_range) on the first violated invariant.
void validate(const RunConfig& config);

// Every qualified key the parser accepts, in serialization order.
std::vector<std::string> config_keys();

}  // namespace ilmtr
