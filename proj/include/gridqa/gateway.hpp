#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gridqa/errors.hpp"

namespace gridqa {

struct GatewayConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string api_key;  // usually from GRIDQA_API_KEY
    std::string model_name = "llama-3.1-8b";
    std::string embedding_model_name = "all-minilm-l6-v2";
    double temperature = 0.0;  // greedy by default
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    int concurrency_limit = 4;
    double backoff_base_ms = 250.0;
    bool cache_enabled = true;

    void validate() const;
};

struct TokenUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatExchange {
    std::optional<std::string> system;
    std::vector<std::string> user_turns;
    std::string response;
    std::optional<TokenUsage> usage;
    std::chrono::milliseconds latency{0};
    int attempts = 1;
    bool from_cache = false;
};

struct EmbeddingVector {
    std::vector<double> components;
    std::size_t dimension() const { return components.size(); }
    bool is_zero() const;
};

struct HttpResult {
    int status = 0;  // 0 means transport failure
    std::string body;
    bool timed_out = false;
};

// Wire-level abstraction; the real client, the replay mock and the scripted
// test doubles all sit behind this.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResult post(const std::string& path, const std::string& json_body) = 0;
};

// OpenAI-compatible HTTP transport over cpp-httplib.
class HttpTransport : public Transport {
public:
    HttpTransport(std::string base_url, std::string api_key, std::chrono::milliseconds timeout);
    HttpResult post(const std::string& path, const std::string& json_body) override;

private:
    std::string scheme_;
    std::string host_;
    int port_ = 0;
    std::string base_path_;
    std::string api_key_;
    std::chrono::milliseconds timeout_;
};

// Answers chat requests from recorded {request_hash, response_text} fixtures.
class ReplayTransport : public Transport {
public:
    static ReplayTransport from_file(const std::string& path);
    explicit ReplayTransport(std::map<std::string, std::string> responses)
        : responses_(std::move(responses)) {}
    HttpResult post(const std::string& path, const std::string& json_body) override;

private:
    std::map<std::string, std::string> responses_;
};

void write_replay_fixture(const std::map<std::string, std::string>& responses,
                          const std::string& path);

// Content hash identifying a chat request; also the replay fixture key and the
// response cache key.
std::string chat_request_hash(const std::string& model, const std::string& system,
                              const std::string& user, double temperature);

// attempt is 0-based; delays grow strictly with attempt even with jitter.
double backoff_ms(int attempt, double base_ms, std::uint64_t jitter_seed);

class GatewayClient {
public:
    GatewayClient(GatewayConfig cfg, std::shared_ptr<Transport> transport);

    ChatExchange chat_complete(const std::optional<std::string>& system, const std::string& user);
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);

    const GatewayConfig& config() const { return cfg_; }
    int network_calls() const { return network_calls_; }

    void save_cache(const std::string& path) const;
    void load_cache(const std::string& path);

private:
    HttpResult post_with_retries(const std::string& path, const std::string& body, int& attempts);

    GatewayConfig cfg_;
    std::shared_ptr<Transport> transport_;
    mutable std::mutex mu_;
    std::condition_variable slot_available_;
    int in_flight_ = 0;
    std::map<std::string, std::string> cache_;
    int network_calls_ = 0;
};

// Deterministic offline embedding: hashed character 3-gram frequencies over a
// fixed 512-bucket space, L2-normalized. Empty text maps to the zero vector.
EmbeddingVector lexical_embed(const std::string& text);

double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

class LexicalEmbedder : public Embedder {
public:
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
};

class RemoteEmbedder : public Embedder {
public:
    explicit RemoteEmbedder(std::shared_ptr<GatewayClient> client) : client_(std::move(client)) {}
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    std::shared_ptr<GatewayClient> client_;
};

}  // namespace gridqa
