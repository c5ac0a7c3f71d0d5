#include "ilmtr/openai_backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <thread>

namespace ilmtr {
namespace {

using nlohmann::json;

constexpr const char* kChatPath = "/v1/chat/completions";
constexpr const char* kEmbeddingsPath = "/v1/embeddings";

std::string post_json(const EndpointParams& endpoint, const HttpOptions& options, const std::string& path,
                      const std::string& body) {
    if (endpoint.url.empty())
        throw GatewayError(GatewayError::Kind::invalid_request, "no endpoint url configured for " + path);
    const auto url = parse_endpoint_url(endpoint.url);
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

    const int attempts_allowed = options.retries + 1;
    for (int attempt = 1;; ++attempt) {
        httplib::Client client(url.origin);
        client.set_connection_timeout(options.timeout);
        client.set_read_timeout(options.timeout);
        client.set_write_timeout(options.timeout);
        auto res = client.Post(url.prefix + path, headers, body, "application/json");
        if (res) {
            if (res->status < 200 || res->status >= 300) {
                throw GatewayError(GatewayError::Kind::http_status,
                                   "POST " + path + " returned HTTP " + std::to_string(res->status) + ": " +
                                       res->body.substr(0, 200),
                                   attempt, res->status);
            }
            return res->body;
        }
        if (attempt >= attempts_allowed) {
            throw GatewayError(GatewayError::Kind::transport,
                               "POST " + url.origin + url.prefix + path + " failed: " + httplib::to_string(res.error()),
                               attempt);
        }
        std::this_thread::sleep_for(options.backoff_base * (1 << (attempt - 1)));
    }
}

}  // namespace

EndpointUrl parse_endpoint_url(const std::string& url) {
    const auto scheme = url.find("://");
    const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = url.find('/', host_start);
    EndpointUrl out;
    if (slash == std::string::npos) {
        out.origin = url;
    } else {
        out.origin = url.substr(0, slash);
        out.prefix = url.substr(slash);
        while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
        // Accept base urls that already name the API version.
        if (out.prefix.size() >= 3 && out.prefix.compare(out.prefix.size() - 3, 3, "/v1") == 0)
            out.prefix.resize(out.prefix.size() - 3);
    }
    return out;
}

std::string chat_payload(const ChatRequest& request, const std::string& model) {
    json body;
    body["model"] = model;
    json messages = json::array();
    if (!request.system_prompt.empty())
        messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", request.user_prompt}});
    body["messages"] = std::move(messages);
    std::visit(
        [&](const auto& p) {
            body["temperature"] = p.temperature;
            body["frequency_penalty"] = p.frequency_penalty;
        },
        request.params);
    body["max_tokens"] = request.max_tokens();
    return body.dump();
}

std::vector<std::string> untransmitted_summary_fields() {
    return {"repeat_penalty", "repeat_last_n", "top_k",  "top_p",        "min_p",        "n_probs",
            "typical_p",      "tfs_z",         "mirostat", "mirostat_eta", "mirostat_tau", "presence_penalty",
            "penalize_newline"};
}

std::string embeddings_payload(std::span<const std::string> texts, const std::string& model) {
    json body;
    body["model"] = model;
    body["input"] = json(std::vector<std::string>(texts.begin(), texts.end()));
    return body.dump();
}

std::string parse_chat_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw GatewayError(GatewayError::Kind::bad_response, std::string("chat response is not JSON: ") + e.what());
    }
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty())
        throw GatewayError(GatewayError::Kind::bad_response, "chat response has no choices");
    const auto& first = (*choices)[0];
    std::string content;
    if (first.contains("message") && first["message"].contains("content") && first["message"]["content"].is_string())
        content = first["message"]["content"].get<std::string>();
    else
        throw GatewayError(GatewayError::Kind::bad_response, "chat response has no message content");
    if (content.find_first_not_of(" \t\r\n") == std::string::npos)
        throw GatewayError(GatewayError::Kind::empty_completion, "chat completion is empty");
    return content;
}

std::vector<Embedding> parse_embeddings_response(const std::string& body, std::size_t expected) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw GatewayError(GatewayError::Kind::bad_response,
                           std::string("embeddings response is not JSON: ") + e.what());
    }
    if (!j.contains("data") || !j["data"].is_array() || j["data"].size() != expected)
        throw GatewayError(GatewayError::Kind::bad_response, "embeddings response has wrong item count");
    std::vector<std::pair<std::size_t, std::vector<double>>> items;
    for (std::size_t i = 0; i < j["data"].size(); ++i) {
        const auto& item = j["data"][i];
        const std::size_t index = item.contains("index") ? item["index"].get<std::size_t>() : i;
        try {
            items.emplace_back(index, item.at("embedding").get<std::vector<double>>());
        } catch (const json::exception& e) {
            throw GatewayError(GatewayError::Kind::bad_response, std::string("bad embedding item: ") + e.what());
        }
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Embedding> out;
    out.reserve(items.size());
    for (auto& [index, vec] : items) {
        if (!out.empty() && vec.size() != out.front().dim())
            throw GatewayError(GatewayError::Kind::dimension_mismatch,
                               "embedding dimension " + std::to_string(vec.size()) + " differs from " +
                                   std::to_string(out.front().dim()) + " within one batch");
        out.push_back(make_embedding(std::move(vec)));
    }
    return out;
}

OpenAIChatBackend::OpenAIChatBackend(EndpointParams endpoint, HttpOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {}

std::string OpenAIChatBackend::chat(const ChatRequest& request) {
    if (request.user_prompt.empty())
        throw GatewayError(GatewayError::Kind::invalid_request, "chat request has an empty user prompt");
    return parse_chat_response(post_json(endpoint_, options_, kChatPath, chat_payload(request, endpoint_.model)));
}

OpenAIEmbeddingBackend::OpenAIEmbeddingBackend(EndpointParams endpoint, HttpOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {}

std::vector<Embedding> OpenAIEmbeddingBackend::embed(std::span<const std::string> texts) {
    if (texts.empty()) return {};
    for (const auto& t : texts)
        if (t.empty()) throw GatewayError(GatewayError::Kind::invalid_request, "cannot embed an empty text");
    const auto body = post_json(endpoint_, options_, kEmbeddingsPath, embeddings_payload(texts, endpoint_.model));
    return parse_embeddings_response(body, texts.size());
}

}  // namespace ilmtr
