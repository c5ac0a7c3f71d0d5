#pragma once

#include "ilmtr/config.hpp"

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ilmtr {

enum class ChatRole { summary, answer };

struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
    std::variant<AnswerModelParams, SummaryModelParams> params;

    ChatRole role() const {
        return std::holds_alternative<SummaryModelParams>(params) ? ChatRole::summary : ChatRole::answer;
    }
    // Generation cap sent to the backend for this request.
    int max_tokens() const;
};

// Unit-normalized embedding vector.
struct Embedding {
    std::vector<double> vector;
    // Norm of the raw vector before normalization.
    double norm = 0.0;

    std::size_t dim() const { return vector.size(); }
    bool operator==(const Embedding&) const = default;
};

// Normalizes `raw` to unit length. Throws on non-finite components or a
// zero vector.
Embedding make_embedding(std::vector<double> raw);

double cosine(std::span<const double> a, std::span<const double> b);

class GatewayError : public std::runtime_error {
public:
    enum class Kind {
        transport,
        http_status,
        empty_completion,
        bad_response,
        dimension_mismatch,
        script_exhausted,
        invalid_request,
    };

    GatewayError(Kind kind, const std::string& what, int attempts = 1, int http_status = 0)
        : std::runtime_error(what), kind_(kind), attempts_(attempts), http_status_(http_status) {}

    Kind kind() const noexcept { return kind_; }
    // Number of attempts made before giving up (retry metadata).
    int attempts() const noexcept { return attempts_; }
    int http_status() const noexcept { return http_status_; }
    bool retryable() const noexcept { return kind_ == Kind::transport; }

private:
    Kind kind_;
    int attempts_;
    int http_status_;
};

const char* to_string(GatewayError::Kind kind);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    // One unit vector per input, in input order.
    virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
};

struct Backends {
    std::shared_ptr<ChatBackend> summary;
    std::shared_ptr<ChatBackend> answer;
    std::shared_ptr<EmbeddingBackend> embedding;
};

}  // namespace ilmtr
