#pragma once

#include "ilmtr/config.hpp"
#include "ilmtr/gateway.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ilmtr {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int input = 2;
inline constexpr int output = 3;
inline constexpr int backend = 4;
}  // namespace exit_code

struct BackendChoice {
    bool mock = false;
    // Answer-model replies for --mock-script, separated by "---" lines.
    std::optional<std::filesystem::path> script;
};

using BackendFactory = std::function<Backends(const RunConfig&, const BackendChoice&)>;

// --mock: extractive chat + hashed embeddings. --mock-script: scripted
// answer model on top of that. Otherwise the OpenAI-compatible endpoints
// from the config.
Backends default_backends(const RunConfig& config, const BackendChoice& choice);

// Splits a mock script into replies. Lines consisting of "---" separate
// replies; surrounding blank lines are trimmed.
std::vector<std::string> parse_mock_script(const std::string& text);

// Entry point for the ilmtr binary; `args` excludes the program name.
// Returns one of the exit_code values.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const BackendFactory& factory = default_backends);

}  // namespace ilmtr
