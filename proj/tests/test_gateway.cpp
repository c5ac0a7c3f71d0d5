#include "ilmtr/gateway.hpp"
#include "ilmtr/mock_backends.hpp"
#include "ilmtr/openai_backend.hpp"
#include "ilmtr/prompts.hpp"

#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>

using namespace ilmtr;
using nlohmann::json;

namespace {

ChatRequest answer_request(std::string user) { return ChatRequest{"sys", std::move(user), AnswerModelParams{}}; }

double cos_of(const Embedding& a, const Embedding& b) { return cosine(a.vector, b.vector); }

}  // namespace

TEST(Embedding, MakeEmbeddingNormalizes) {
    const auto e = make_embedding({3.0, 4.0});
    EXPECT_NEAR(e.vector[0], 0.6, 1e-12);
    EXPECT_NEAR(e.vector[1], 0.8, 1e-12);
    EXPECT_NEAR(e.norm, 5.0, 1e-12);
    EXPECT_THROW(make_embedding({0.0, 0.0}), GatewayError);
    EXPECT_THROW(make_embedding({1.0, NAN}), GatewayError);
}

TEST(ScriptedChat, PassthroughAndExhaustion) {
    ScriptedChatBackend chat(std::vector<std::string>{"X"});
    EXPECT_EQ(chat.chat(answer_request("q")), "X");
    try {
        chat.chat(answer_request("q"));
        FAIL() << "expected exhaustion";
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), GatewayError::Kind::script_exhausted);
    }
    EXPECT_EQ(chat.calls(), 2u);
    EXPECT_EQ(chat.requests()[0].user_prompt, "q");
}

TEST(ScriptedChat, NulloptIsTransportFailure) {
    ScriptedChatBackend chat(std::vector<std::optional<std::string>>{std::nullopt, "ok"});
    try {
        chat.chat(answer_request("q"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), GatewayError::Kind::transport);
        EXPECT_TRUE(e.retryable());
    }
    EXPECT_EQ(chat.chat(answer_request("q")), "ok");
}

TEST(ScriptedChat, ConcurrentCallersEachGetOneReply) {
    std::vector<std::string> script;
    for (int i = 0; i < 200; ++i) script.push_back("r" + std::to_string(i));
    ScriptedChatBackend chat(script);
    std::mutex mu;
    std::set<std::string> seen;
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < 50; ++i) {
                auto r = chat.chat(answer_request("q"));
                std::lock_guard lock(mu);
                seen.insert(r);
            }
        });
    for (auto& t : threads) t.join();
    EXPECT_EQ(seen.size(), 200u);
}

TEST(HashedEmbedding, IdenticalTextsCosineOne) {
    HashedBagOfWordsEmbedding emb;
    const std::vector<std::string> texts{"the apple is in the kitchen", "the apple is in the kitchen"};
    const auto v = emb.embed(texts);
    EXPECT_NEAR(cos_of(v[0], v[1]), 1.0, 1e-12);
    EXPECT_EQ(v[0].dim(), 256u);
}

TEST(HashedEmbedding, DisjointVocabulariesOrthogonal) {
    HashedBagOfWordsEmbedding emb;
    // Precondition for the example: the two bags land in disjoint buckets.
    for (const auto* a : {"cow", "barn"})
        for (const auto* b : {"comet", "nebula"}) ASSERT_NE(emb.bucket_of(a), emb.bucket_of(b));
    const std::vector<std::string> texts{"cow barn", "comet nebula"};
    const auto v = emb.embed(texts);
    EXPECT_EQ(cos_of(v[0], v[1]), 0.0);
}

TEST(HashedEmbedding, MatchesIndependentBagOfWordsCosine) {
    HashedBagOfWordsEmbedding emb;
    const std::vector<std::string> texts{"apple kitchen", "apple garden"};
    // Hashing equals the plain bag of words only without collisions.
    std::set<std::size_t> buckets;
    for (const auto* w : {"apple", "kitchen", "garden"}) buckets.insert(emb.bucket_of(w));
    ASSERT_EQ(buckets.size(), 3u);
    const auto v = emb.embed(texts);
    EXPECT_NEAR(cos_of(v[0], v[1]), testing_support::bag_cosine(texts[0], texts[1]), 1e-9);
    EXPECT_NEAR(cos_of(v[0], v[1]), 0.5, 1e-9);
}

TEST(HashedEmbedding, OracleAgreementOnSentences) {
    HashedBagOfWordsEmbedding emb;
    const auto corpus = testing_support::tagged_corpus(17, 40);
    for (std::size_t i = 0; i + 1 < corpus.sentences.size(); ++i) {
        const auto& a = corpus.sentences[i];
        const auto& b = corpus.sentences[i + 1];
        // Skip pairs whose distinct words collide in the hash space.
        std::set<std::string> distinct;
        for (const auto& [w, n] : testing_support::word_counts(a + " " + b)) distinct.insert(w);
        std::set<std::size_t> buckets;
        for (const auto& w : distinct) buckets.insert(emb.bucket_of(w));
        if (buckets.size() != distinct.size()) continue;
        const std::vector<std::string> pair{a, b};
        const auto v = emb.embed(pair);
        EXPECT_NEAR(cos_of(v[0], v[1]), testing_support::bag_cosine(a, b), 1e-9) << a << " | " << b;
    }
}

TEST(HashedEmbedding, PreservesOrderAndLength) {
    HashedBagOfWordsEmbedding emb;
    const std::vector<std::string> texts{"one", "two three", "four", "?!"};
    const auto v = emb.embed(texts);
    ASSERT_EQ(v.size(), 4u);
    for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(v[i], emb.embed_one(texts[i]));
    EXPECT_THROW(emb.embed_one(""), GatewayError);
    for (const auto& e : v) {
        double n = 0;
        for (double x : e.vector) n += x * x;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
    }
}

TEST(ExtractiveChat, NeedleGoesToSurprise) {
    ExtractiveChatBackend chat({"secret ingredients"});
    const std::string context =
        "The harbor was busy. Figs are one of the secret ingredients needed to build the perfect pizza. Boats came "
        "and went.";
    const auto reply = chat.chat(ChatRequest{prompts::kDualSummarySystem, context, SummaryModelParams{}});
    EXPECT_EQ(reply,
              "(Summary): The harbor was busy. Boats came and went.\n\n(Surprise): Figs are one of the secret "
              "ingredients needed to build the perfect pizza.");
}

TEST(ExtractiveChat, NoMatchesEmptySurprise) {
    ExtractiveChatBackend chat({"secret ingredients"});
    const auto reply = chat.chat(ChatRequest{prompts::kDualSummarySystem, "A calm day. Nothing odd.", SummaryModelParams{}});
    EXPECT_EQ(reply, "(Summary): A calm day. Nothing odd.\n\n(Surprise): ");
}

TEST(ExtractiveChat, TwoMatchesInDocumentOrder) {
    ExtractiveChatBackend chat({"needle"});
    const auto reply = chat.chat(
        ChatRequest{prompts::kDualSummarySystem, "First needle here. Hay. Second needle there.", SummaryModelParams{}});
    EXPECT_NE(reply.find("(Surprise): First needle here. Second needle there."), std::string::npos);
}

TEST(ExtractiveChat, PlainPromptDropsMatches) {
    ExtractiveChatBackend chat({"needle"});
    const auto reply = chat.chat(ChatRequest{prompts::kPlainSummarySystem,
                                             prompts::kPlainSummaryUserPrefix + "Hay one. A needle. Hay two. Hay three.",
                                             SummaryModelParams{}});
    EXPECT_EQ(reply, "Hay one. Hay two.");
}

TEST(ExtractiveChat, AnswerEchoesMatches) {
    ExtractiveChatBackend chat({"needle"});
    const auto user = prompts::single_shot_user("### node 3 (level 0, leaf_text)\nHay. The needle is red.", "What?");
    EXPECT_EQ(chat.chat(ChatRequest{prompts::kQuestionAnsweringSystem, user, AnswerModelParams{}}),
              "The needle is red.");
    const auto none = prompts::single_shot_user("Hay only.", "What?");
    EXPECT_EQ(chat.chat(ChatRequest{prompts::kQuestionAnsweringSystem, none, AnswerModelParams{}}),
              ExtractiveChatBackend::kNoAnswer);
    EXPECT_EQ(chat.calls(), 2u);
}

TEST(ExtractiveChat, Deterministic) {
    ExtractiveChatBackend a({"x"}), b({"x"});
    const ChatRequest r{prompts::kDualSummarySystem, "x marks. the spot. x again.", SummaryModelParams{}};
    EXPECT_EQ(a.chat(r), b.chat(r));
}

TEST(WirePayload, GoldenChatPayload) {
    const ChatRequest r{"sys \"quoted\"\nline", "user text ü", AnswerModelParams{}};
    EXPECT_EQ(chat_payload(r, "llama"),
              R"({"frequency_penalty":1.2,"max_tokens":200,"messages":[{"content":"sys \"quoted\"\nline","role":"system"},{"content":"user text ü","role":"user"}],"model":"llama","temperature":0.0})");
}

TEST(WirePayload, SummaryRoleUsesSummaryBlock) {
    SummaryModelParams p;
    p.n_predict = 300;
    const auto body = json::parse(chat_payload(ChatRequest{"s", "u", p}, "m"));
    EXPECT_EQ(body["max_tokens"], 300);
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
    EXPECT_DOUBLE_EQ(body["frequency_penalty"].get<double>(), 0.0);
    EXPECT_EQ(body.size(), 5u);
    EXPECT_FALSE(body.contains("mirostat"));
}

TEST(WirePayload, EmbeddingsPayloadAndParse) {
    const std::vector<std::string> texts{"a", "b"};
    EXPECT_EQ(embeddings_payload(texts, "e"), R"({"input":["a","b"],"model":"e"})");
    const auto v = parse_embeddings_response(
        R"({"data":[{"index":1,"embedding":[0,2]},{"index":0,"embedding":[3,0]}]})", 2);
    EXPECT_EQ(v[0].vector, (std::vector<double>{1, 0}));
    EXPECT_EQ(v[1].vector, (std::vector<double>{0, 1}));
    try {
        parse_embeddings_response(R"({"data":[{"index":0,"embedding":[1,0]},{"index":1,"embedding":[1,0,0]}]})", 2);
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), GatewayError::Kind::dimension_mismatch);
    }
}

TEST(WirePayload, ChatResponseErrors) {
    EXPECT_EQ(parse_chat_response(R"({"choices":[{"message":{"role":"assistant","content":"hi"}}]})"), "hi");
    auto kind = [](const std::string& body) {
        try {
            parse_chat_response(body);
        } catch (const GatewayError& e) {
            return e.kind();
        }
        return GatewayError::Kind::invalid_request;
    };
    EXPECT_EQ(kind(R"({"choices":[{"message":{"content":"  \n"}}]})"), GatewayError::Kind::empty_completion);
    EXPECT_EQ(kind(R"({"choices":[]})"), GatewayError::Kind::bad_response);
    EXPECT_EQ(kind("not json"), GatewayError::Kind::bad_response);
}

TEST(WirePayload, EndpointUrl) {
    auto u = parse_endpoint_url("http://localhost:8080/v1");
    EXPECT_EQ(u.origin, "http://localhost:8080");
    EXPECT_EQ(u.prefix, "");
    u = parse_endpoint_url("https://api.example.com/proxy/v1/");
    EXPECT_EQ(u.origin, "https://api.example.com");
    EXPECT_EQ(u.prefix, "/proxy");
    u = parse_endpoint_url("http://h:1");
    EXPECT_EQ(u.origin, "http://h:1");
}

// Local OpenAI-compatible stand-in. Answers deterministically from the
// request and records raw bodies for golden comparison.
class FakeServer {
public:
    FakeServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            record(req);
            if (fail_next_ > 0) {
                --fail_next_;
                res.status = 503;
                return;
            }
            const auto body = json::parse(req.body);
            const std::string user = body["messages"].back()["content"];
            res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo: " + user}}}}}}}
                                .dump(),
                            "application/json");
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            record(req);
            const auto body = json::parse(req.body);
            json data = json::array();
            for (std::size_t i = 0; i < body["input"].size(); ++i) {
                const std::string t = body["input"][i];
                data.push_back({{"index", i}, {"embedding", {static_cast<double>(t.size()), 1.0, 0.0}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    std::vector<std::string> bodies() {
        std::lock_guard lock(mu_);
        return bodies_;
    }
    std::vector<std::string> auth() {
        std::lock_guard lock(mu_);
        return auth_;
    }
    void fail_next(int n) { fail_next_ = n; }

private:
    void record(const httplib::Request& req) {
        std::lock_guard lock(mu_);
        bodies_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
    }
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mu_;
    std::vector<std::string> bodies_, auth_;
    std::atomic<int> fail_next_{0};
};

TEST(OpenAIBackend, ChatRoundTripAgainstLocalServer) {
    FakeServer server;
    OpenAIChatBackend chat(EndpointParams{server.url(), "llama", "token123"});
    const ChatRequest r{"sys", "What is 2+2?", AnswerModelParams{}};
    const auto first = chat.chat(r);
    const auto second = chat.chat(r);
    EXPECT_EQ(first, "echo: What is 2+2?");
    EXPECT_EQ(first, second);
    const auto bodies = server.bodies();
    ASSERT_EQ(bodies.size(), 2u);
    // Prompt text reaches the wire unmodified.
    EXPECT_EQ(bodies[0], chat_payload(r, "llama"));
    const auto wire = json::parse(bodies[0]);
    EXPECT_EQ(wire["messages"][0]["content"], r.system_prompt);
    EXPECT_EQ(wire["messages"][1]["content"], r.user_prompt);
    EXPECT_EQ(server.auth()[0], "Bearer token123");
}

TEST(OpenAIBackend, HttpStatusSurfaced) {
    FakeServer server;
    server.fail_next(1);
    OpenAIChatBackend chat(EndpointParams{server.url(), "m", ""});
    try {
        chat.chat(answer_request("q"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), GatewayError::Kind::http_status);
        EXPECT_EQ(e.http_status(), 503);
        EXPECT_FALSE(e.retryable());
    }
}

TEST(OpenAIBackend, TransportFailureRetriesThenReports) {
    HttpOptions fast;
    fast.timeout = std::chrono::seconds(1);
    fast.backoff_base = std::chrono::milliseconds(1);
    // Nothing listens on port 9 of localhost in the test sandbox.
    OpenAIChatBackend chat(EndpointParams{"http://127.0.0.1:9", "m", ""}, fast);
    try {
        chat.chat(answer_request("q"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), GatewayError::Kind::transport);
        EXPECT_EQ(e.attempts(), 3);
    }
}

TEST(OpenAIBackend, EmbeddingsAgainstLocalServer) {
    FakeServer server;
    OpenAIEmbeddingBackend emb(EndpointParams{server.url(), "enc", ""});
    const std::vector<std::string> texts{"abc", "a"};
    const auto v = emb.embed(texts);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_NEAR(v[0].norm, std::sqrt(10.0), 1e-12);
    EXPECT_EQ(server.bodies()[0], embeddings_payload(texts, "enc"));
    EXPECT_THROW(emb.embed(std::vector<std::string>{""}), GatewayError);
}

TEST(OpenAIBackend, MissingUrlIsInvalidRequest) {
    OpenAIChatBackend chat(EndpointParams{});
    try {
        chat.chat(answer_request("q"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), GatewayError::Kind::invalid_request);
    }
}
