#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace judgebench::llm {

inline constexpr const char* kDefaultExtractorModel = "gpt-4.1-mini";
inline constexpr double kDefaultExtractorTemperature = 0.3;
inline constexpr const char* kDefaultValidatorModel = "gpt-4o-mini";
inline constexpr double kDefaultValidatorTemperature = 0.1;

struct ChatRequest {
    std::string model_tag;
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.0;
    int max_tokens = 1024;
    /// Non-zero values are sent as the provider seed and change the cache key,
    /// so a deliberate re-ask is not answered from cache.
    std::uint64_t nonce = 0;
};

enum class FinishReason { stop, length, error };

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    bool from_cache = false;
};

struct TokenEmbeddings {
    std::vector<std::string> tokens;
    std::vector<std::vector<double>> vectors;
};

struct PosTagging {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
    std::vector<std::string> tagset;
};

/// The three remote capabilities. Each has its own endpoint.
enum class Endpoint { chat, embed, pos };

[[nodiscard]] std::string_view endpoint_name(Endpoint endpoint) noexcept;
[[nodiscard]] std::string_view finish_reason_name(FinishReason reason) noexcept;

/// One raw HTTP exchange. status 0 means no response (timeout, refused).
struct HttpReply {
    int status = 0;
    std::string body;
};

/// Moves a JSON body to a provider and back. No retry, no caching.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual HttpReply post(Endpoint endpoint, const std::string& body) = 0;
};

struct HttpEndpoints {
    std::string chat;  ///< full URL, e.g. https://api.openai.com/v1/chat/completions
    std::string embed;
    std::string pos;
};

/// cpp-httplib backed transport; Bearer credential read once from an env var.
class HttpTransport final : public Transport {
  public:
    HttpTransport(HttpEndpoints endpoints, std::string api_key_env, std::chrono::seconds timeout);
    HttpReply post(Endpoint endpoint, const std::string& body) override;

  private:
    HttpEndpoints endpoints_;
    std::string api_key_;
    std::chrono::seconds timeout_;
};

/// Offline provider driven by a JSON script.
///
/// Script layout:
///
///     {
///       "chat": [
///         {"system_contains": "...", "user_contains": "...",
///          "responses": ["text", {"status": 503}, {"text": "...", "finish_reason": "length"}]}
///       ],
///       "chat_default": "text used when no rule matches",
///       "embed": {"mode": "hash" | "basis", "dim": 16, "token_level": true,
///                 "vectors": {"token": [1, 0]}},
///       "pos":   {"enabled": true}
///     }
///
/// Rules are tried in order; a rule's responses are consumed one per call and
/// the last one repeats. Unmatched chat requests get HTTP 400. The embedder
/// tokenizes with the metric tokenizer and maps every token to a unit vector
/// (explicit "vectors" first, then a hashed dense vector or a hashed one-hot
/// basis vector). The POS tagger tags digits NUM, punctuation PUNCT, else X.
class MockTransport final : public Transport {
  public:
    explicit MockTransport(nlohmann::json script = nlohmann::json::object());
    static std::shared_ptr<MockTransport> from_file(const std::filesystem::path& path);

    HttpReply post(Endpoint endpoint, const std::string& body) override;

    [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }
    [[nodiscard]] std::size_t calls(Endpoint endpoint) const noexcept;
    void reset_counters() noexcept;

  private:
    HttpReply chat(const nlohmann::json& request);
    HttpReply embed(const nlohmann::json& request) const;
    HttpReply pos(const nlohmann::json& request) const;

    nlohmann::json script_;
    std::vector<std::size_t> cursor_;
    std::mutex mutex_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> per_endpoint_[3]{};
};

struct RetryPolicy {
    int max_retries = 4;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{8000};

    /// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
    [[nodiscard]] std::chrono::milliseconds delay_for(int retry) const noexcept;
};

struct GatewayConfig {
    std::filesystem::path cache_dir; ///< empty disables the cache
    RetryPolicy retry;
    std::size_t max_in_flight = 4;
    std::string embed_model = "mock-embed";
    std::string pos_model = "mock-pos";
};

/// Cached, retrying, concurrency-bounded client shared across threads.
///
/// Every successful exchange is written to `<cache_dir>/<sha256>.json` before
/// the call returns. The key hashes the endpoint together with the exact
/// request body, so any field change (model, prompts, temperature,
/// max_tokens, nonce) is a different entry.
class Gateway {
  public:
    Gateway(std::shared_ptr<Transport> transport, GatewayConfig config);

    [[nodiscard]] ChatResponse complete(const ChatRequest& request);

    /// Token-level vectors; CapabilityError when the provider only returns a
    /// pooled vector.
    [[nodiscard]] TokenEmbeddings embed_tokens(std::string_view text);
    /// Whole-text vector: the provider's pooled vector, else the token mean.
    [[nodiscard]] std::vector<double> embed_text(std::string_view text);
    [[nodiscard]] PosTagging pos_tag(std::string_view text);

    /// Attempts that reached the transport (cache hits excluded).
    [[nodiscard]] std::size_t network_attempts() const noexcept { return attempts_.load(); }
    [[nodiscard]] std::size_t cache_hits() const noexcept { return cache_hits_.load(); }
    [[nodiscard]] const GatewayConfig& config() const noexcept { return config_; }

    [[nodiscard]] static std::string chat_body(const ChatRequest& request);

  private:
    struct Exchange {
        std::string body;
        bool from_cache = false;
    };
    Exchange exchange(Endpoint endpoint, const std::string& request_body);
    nlohmann::json embed_response(std::string_view text);

    std::shared_ptr<Transport> transport_;
    GatewayConfig config_;
    std::counting_semaphore<> in_flight_;
    std::atomic<std::size_t> attempts_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

} // namespace judgebench::llm
