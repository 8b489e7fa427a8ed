#include "gridqa/gateway.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "gridqa/hash.hpp"

namespace gridqa {

using nlohmann::json;

void GatewayConfig::validate() const {
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
    if (base_url.empty()) throw ConfigError("base_url must not be empty");
    if (backoff_base_ms <= 0) throw ConfigError("backoff_base_ms must be > 0");
}

bool EmbeddingVector::is_zero() const {
    for (double c : components)
        if (c != 0.0) return false;
    return true;
}

std::string chat_request_hash(const std::string& model, const std::string& system,
                              const std::string& user, double temperature) {
    char tbuf[32];
    std::snprintf(tbuf, sizeof(tbuf), "%.6g", temperature);
    std::uint64_t h = fnv1a64(model);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(system, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(user, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(tbuf, h);
    return hex64(h);
}

double backoff_ms(int attempt, double base_ms, std::uint64_t jitter_seed) {
    const double slot = base_ms * std::pow(2.0, attempt);
    // jitter bounded below half the slot so consecutive delays never overlap
    std::uint64_t z = jitter_seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(attempt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    const double u = static_cast<double>((z ^ (z >> 31)) >> 11) * 0x1.0p-53;
    return slot + u * slot * 0.5;
}

// --- HttpTransport -----------------------------------------------------------

HttpTransport::HttpTransport(std::string base_url, std::string api_key,
                             std::chrono::milliseconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
    std::string url = std::move(base_url);
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url lacks a scheme: " + url);
    scheme_ = url.substr(0, scheme_end);
    std::string rest = url.substr(scheme_end + 3);
    auto slash = rest.find('/');
    std::string host_port = slash == std::string::npos ? rest : rest.substr(0, slash);
    base_path_ = slash == std::string::npos ? "" : rest.substr(slash);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
    auto colon = host_port.find(':');
    if (colon != std::string::npos) {
        host_ = host_port.substr(0, colon);
        port_ = std::stoi(host_port.substr(colon + 1));
    } else {
        host_ = host_port;
        port_ = scheme_ == "https" ? 443 : 80;
    }
}

HttpResult HttpTransport::post(const std::string& path, const std::string& json_body) {
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto run = [&](auto& client) -> HttpResult {
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
        auto res = client.Post((base_path_ + path).c_str(), headers, json_body,
                               "application/json");
        if (!res) {
            bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                             res.error() == httplib::Error::Read;
            return HttpResult{0, httplib::to_string(res.error()), timed_out};
        }
        return HttpResult{res->status, res->body, false};
    };
    if (scheme_ == "https") {
        httplib::SSLClient client(host_, port_);
        return run(client);
    }
    httplib::Client client(host_, port_);
    return run(client);
}

// --- ReplayTransport ---------------------------------------------------------

ReplayTransport ReplayTransport::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open replay fixture " + path);
    std::map<std::string, std::string> responses;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        responses[row.at("request_hash").get<std::string>()] =
            row.at("response_text").get<std::string>();
    }
    return ReplayTransport(std::move(responses));
}

void write_replay_fixture(const std::map<std::string, std::string>& responses,
                          const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SinkError(path);
    for (const auto& [hash, text] : responses) {
        nlohmann::ordered_json row;
        row["request_hash"] = hash;
        row["response_text"] = text;
        out << row.dump() << "\n";
    }
}

HttpResult ReplayTransport::post(const std::string& path, const std::string& json_body) {
    if (path != "/chat/completions")
        return HttpResult{404, R"({"error":"replay transport only serves chat completions"})",
                          false};
    json body = json::parse(json_body, nullptr, false);
    if (body.is_discarded()) return HttpResult{400, R"({"error":"bad request"})", false};
    std::string model = body.value("model", "");
    double temperature = body.value("temperature", 0.0);
    std::string system, user;
    for (const auto& msg : body.value("messages", json::array())) {
        const std::string role = msg.value("role", "");
        if (role == "system") system = msg.value("content", "");
        if (role == "user") user = msg.value("content", "");
    }
    auto it = responses_.find(chat_request_hash(model, system, user, temperature));
    if (it == responses_.end())
        return HttpResult{404, R"({"error":"no recorded response for request"})", false};
    json reply = {{"choices", json::array({{{"message", {{"role", "assistant"},
                                                         {"content", it->second}}}}})},
                  {"usage", {{"prompt_tokens", 0}, {"completion_tokens", 0}}}};
    return HttpResult{200, reply.dump(), false};
}

// --- GatewayClient -----------------------------------------------------------

GatewayClient::GatewayClient(GatewayConfig cfg, std::shared_ptr<Transport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
    cfg_.validate();
}

HttpResult GatewayClient::post_with_retries(const std::string& path, const std::string& body,
                                            int& attempts) {
    {
        std::unique_lock<std::mutex> lock(mu_);
        slot_available_.wait(lock, [&] { return in_flight_ < cfg_.concurrency_limit; });
        ++in_flight_;
    }
    struct SlotRelease {
        GatewayClient* self;
        ~SlotRelease() {
            std::lock_guard<std::mutex> lock(self->mu_);
            --self->in_flight_;
            self->slot_available_.notify_one();
        }
    } release{this};

    const std::uint64_t jitter_seed = fnv1a64(body);
    attempts = 0;
    HttpResult last;
    while (true) {
        ++attempts;
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++network_calls_;
        }
        last = transport_->post(path, body);
        if (last.status == 200) return last;
        if (last.status == 401 || last.status == 403)
            throw GatewayError(GatewayError::Kind::Auth, attempts, last.body);
        const bool transient = last.status == 0 || last.status == 429 || last.status >= 500;
        if (!transient) throw GatewayError(GatewayError::Kind::Protocol, attempts, last.body);
        if (attempts > cfg_.max_retries) {
            auto kind = last.timed_out ? GatewayError::Kind::Timeout
                        : last.status == 429 ? GatewayError::Kind::RateLimited
                                             : GatewayError::Kind::Protocol;
            throw GatewayError(kind, attempts, last.body);
        }
        const double delay = backoff_ms(attempts - 1, cfg_.backoff_base_ms, jitter_seed);
        std::this_thread::sleep_for(
            std::chrono::microseconds(static_cast<long>(delay * 1000.0)));
    }
}

ChatExchange GatewayClient::chat_complete(const std::optional<std::string>& system,
                                          const std::string& user) {
    const std::string key =
        chat_request_hash(cfg_.model_name, system.value_or(""), user, cfg_.temperature);
    if (cfg_.cache_enabled && cfg_.temperature == 0.0) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            ChatExchange ex;
            ex.system = system;
            ex.user_turns = {user};
            ex.response = it->second;
            ex.from_cache = true;
            ex.attempts = 0;
            return ex;
        }
    }

    json messages = json::array();
    if (system) messages.push_back({{"role", "system"}, {"content", *system}});
    messages.push_back({{"role", "user"}, {"content", user}});
    json body = {{"model", cfg_.model_name},
                 {"messages", messages},
                 {"temperature", cfg_.temperature}};

    const auto start = std::chrono::steady_clock::now();
    int attempts = 0;
    HttpResult res = post_with_retries("/chat/completions", body.dump(), attempts);
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);

    json reply = json::parse(res.body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
        throw GatewayError(GatewayError::Kind::Protocol, attempts,
                           "malformed chat response: " + res.body.substr(0, 200));
    ChatExchange ex;
    ex.system = system;
    ex.user_turns = {user};
    ex.response = reply["choices"][0]["message"].value("content", "");
    if (reply.contains("usage")) {
        TokenUsage usage;
        usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
        usage.completion_tokens = reply["usage"].value("completion_tokens", 0);
        ex.usage = usage;
    }
    ex.latency = elapsed;
    ex.attempts = attempts;

    if (cfg_.cache_enabled && cfg_.temperature == 0.0) {
        std::lock_guard<std::mutex> lock(mu_);
        cache_[key] = ex.response;
    }
    return ex;
}

std::vector<EmbeddingVector> GatewayClient::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw EmptyBatch();
    json body = {{"model", cfg_.embedding_model_name}, {"input", texts}};
    int attempts = 0;
    HttpResult res = post_with_retries("/embeddings", body.dump(), attempts);
    json reply = json::parse(res.body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("data"))
        throw GatewayError(GatewayError::Kind::Protocol, attempts,
                           "malformed embeddings response");
    std::vector<EmbeddingVector> out(texts.size());
    for (const auto& row : reply["data"]) {
        const auto idx = row.value("index", 0);
        if (idx < 0 || static_cast<std::size_t>(idx) >= out.size())
            throw GatewayError(GatewayError::Kind::Protocol, attempts,
                               "embedding index out of range");
        out[static_cast<std::size_t>(idx)].components =
            row.at("embedding").get<std::vector<double>>();
    }
    const std::size_t dim = out.front().dimension();
    for (const auto& v : out)
        if (v.dimension() != dim) throw DimensionMismatch(dim, v.dimension());
    return out;
}

void GatewayClient::save_cache(const std::string& path) const {
    std::lock_guard<std::mutex> lock(mu_);
    write_replay_fixture(cache_, path);
}

void GatewayClient::load_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in) return;  // cache files are optional
    std::string line;
    std::lock_guard<std::mutex> lock(mu_);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded()) continue;
        cache_[row.value("request_hash", "")] = row.value("response_text", "");
    }
}

// --- Embeddings --------------------------------------------------------------

EmbeddingVector lexical_embed(const std::string& text) {
    constexpr std::size_t kBuckets = 512;
    EmbeddingVector v;
    v.components.assign(kBuckets, 0.0);
    if (text.empty()) return v;  // zero vector, flagged via is_zero()
    if (text.size() < 3) {
        v.components[fnv1a64(text) % kBuckets] += 1.0;
    } else {
        for (std::size_t i = 0; i + 3 <= text.size(); ++i)
            v.components[fnv1a64(std::string_view(text).substr(i, 3)) % kBuckets] += 1.0;
    }
    double norm = 0.0;
    for (double c : v.components) norm += c * c;
    norm = std::sqrt(norm);
    for (double& c : v.components) c /= norm;
    return v;
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dimension() != v.dimension()) throw DimensionMismatch(u.dimension(), v.dimension());
    if (u.is_zero() || v.is_zero()) throw ZeroVector();
    if (u.components == v.components) return 1.0;
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.components.size(); ++i) {
        dot += u.components[i] * v.components[i];
        nu += u.components[i] * u.components[i];
        nv += v.components[i] * v.components[i];
    }
    double c = dot / (std::sqrt(nu) * std::sqrt(nv));
    return std::min(1.0, std::max(-1.0, c));
}

std::vector<EmbeddingVector> LexicalEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw EmptyBatch();
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(lexical_embed(t));
    return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::embed(const std::vector<std::string>& texts) {
    return client_->embed(texts);
}

}  // namespace gridqa
