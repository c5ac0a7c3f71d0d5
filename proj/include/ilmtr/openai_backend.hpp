#pragma once

#include "ilmtr/gateway.hpp"

#include <chrono>
#include <string>
#include <vector>

namespace ilmtr {

struct HttpOptions {
    std::chrono::seconds timeout{120};
    int retries = 2;
    // Backoff before retry i (0-based) is backoff_base * 2^i.
    std::chrono::milliseconds backoff_base{500};
};

// Splits "http://host:port/prefix" into the scheme-host-port part and the
// path prefix the API paths are appended to.
struct EndpointUrl {
    std::string origin;
    std::string prefix;
};
EndpointUrl parse_endpoint_url(const std::string& url);

// Request body for POST /v1/chat/completions. Only the fields both
// llama.cpp and OpenAI understand are emitted.
std::string chat_payload(const ChatRequest& request, const std::string& model);

// The summary-model sampler fields that have no slot in chat_payload.
std::vector<std::string> untransmitted_summary_fields();

std::string embeddings_payload(std::span<const std::string> texts, const std::string& model);

// Extracts choices[0].message.content. Throws GatewayError(bad_response or
// empty_completion).
std::string parse_chat_response(const std::string& body);

std::vector<Embedding> parse_embeddings_response(const std::string& body, std::size_t expected);

class OpenAIChatBackend final : public ChatBackend {
public:
    OpenAIChatBackend(EndpointParams endpoint, HttpOptions options = {});
    std::string chat(const ChatRequest& request) override;

private:
    EndpointParams endpoint_;
    HttpOptions options_;
};

class OpenAIEmbeddingBackend final : public EmbeddingBackend {
public:
    OpenAIEmbeddingBackend(EndpointParams endpoint, HttpOptions options = {});
    std::vector<Embedding> embed(std::span<const std::string> texts) override;

private:
    EndpointParams endpoint_;
    HttpOptions options_;
};

}  // namespace ilmtr
