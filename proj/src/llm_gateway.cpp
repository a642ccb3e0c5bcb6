#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "judgebench/llm_gateway.hpp"

#include "judgebench/error.hpp"
#include "judgebench/hashing.hpp"
#include "judgebench/io.hpp"
#include "judgebench/rng.hpp"
#include "judgebench/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <thread>

namespace judgebench::llm {

using nlohmann::json;

std::string_view endpoint_name(Endpoint endpoint) noexcept {
    switch (endpoint) {
    case Endpoint::chat:
        return "chat";
    case Endpoint::embed:
        return "embed";
    case Endpoint::pos:
        return "pos";
    }
    return "unknown";
}

std::string_view finish_reason_name(FinishReason reason) noexcept {
    switch (reason) {
    case FinishReason::stop:
        return "stop";
    case FinishReason::length:
        return "length";
    case FinishReason::error:
        return "error";
    }
    return "error";
}

namespace {

FinishReason parse_finish_reason(const json& value) {
    if (!value.is_string()) {
        return FinishReason::stop;
    }
    const auto& s = value.get_ref<const std::string&>();
    if (s == "length") {
        return FinishReason::length;
    }
    if (s == "stop" || s == "end_turn") {
        return FinishReason::stop;
    }
    return FinishReason::error;
}

std::string excerpt(std::string_view body) {
    constexpr std::size_t kLimit = 200;
    return std::string(body.substr(0, kLimit)) + (body.size() > kLimit ? "..." : "");
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || (status >= 500 && status != 501); }

json parse_or_throw(const std::string& body, Endpoint endpoint) {
    try {
        return json::parse(body);
    } catch (const json::parse_error&) {
        throw ProviderError(std::string(endpoint_name(endpoint)) + ": response is not JSON: " + excerpt(body), 200);
    }
}

ChatResponse parse_chat(const std::string& body) {
    const json reply = parse_or_throw(body, Endpoint::chat);
    const auto* choices = reply.contains("choices") ? &reply["choices"] : nullptr;
    if (!choices || !choices->is_array() || choices->empty() || !(*choices)[0].contains("message") ||
        !(*choices)[0]["message"].contains("content")) {
        throw ProviderError("chat: response lacks choices[0].message.content: " + excerpt(body), 200);
    }
    const auto& choice = (*choices)[0];
    ChatResponse response;
    const auto& content = choice["message"]["content"];
    response.text = content.is_string() ? content.get<std::string>() : std::string();
    response.finish_reason = parse_finish_reason(choice.value("finish_reason", json()));
    return response;
}

struct ParsedUrl {
    std::string origin;
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw UsageError("endpoint URL needs a scheme: " + url);
    }
    const auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_begin), url.substr(path_begin)};
}

std::vector<double> unit(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v) {
            x /= norm;
        }
    }
    return v;
}

} // namespace

// ---------------------------------------------------------------------------
// HttpTransport

HttpTransport::HttpTransport(HttpEndpoints endpoints, std::string api_key_env, std::chrono::seconds timeout)
    : endpoints_(std::move(endpoints)), timeout_(timeout) {
    if (const char* key = std::getenv(api_key_env.c_str())) {
        api_key_ = key;
    }
}

HttpReply HttpTransport::post(Endpoint endpoint, const std::string& body) {
    const std::string* url = nullptr;
    switch (endpoint) {
    case Endpoint::chat:
        url = &endpoints_.chat;
        break;
    case Endpoint::embed:
        url = &endpoints_.embed;
        break;
    case Endpoint::pos:
        url = &endpoints_.pos;
        break;
    }
    if (!url || url->empty()) {
        throw CapabilityError(std::string("no ") + std::string(endpoint_name(endpoint)) + " endpoint configured");
    }
    const auto [origin, path] = split_url(*url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }
    auto result = client.Post(path, headers, body, "application/json");
    if (!result) {
        return {0, httplib::to_string(result.error())};
    }
    return {result->status, result->body};
}

// ---------------------------------------------------------------------------
// MockTransport

MockTransport::MockTransport(json script) : script_(std::move(script)) {
    if (!script_.is_object()) {
        throw DataError("mock provider script must be a JSON object");
    }
    if (script_.contains("chat")) {
        if (!script_["chat"].is_array()) {
            throw DataError("mock provider: \"chat\" must be an array of rules");
        }
        for (const auto& rule : script_["chat"]) {
            if (!rule.contains("responses") || !rule["responses"].is_array() || rule["responses"].empty()) {
                throw DataError("mock provider: every chat rule needs a non-empty \"responses\" array");
            }
        }
        cursor_.assign(script_["chat"].size(), 0);
    }
}

std::shared_ptr<MockTransport> MockTransport::from_file(const std::filesystem::path& path) {
    const std::string content = io::read_file(path);
    try {
        return std::make_shared<MockTransport>(json::parse(content));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::size_t MockTransport::calls(Endpoint endpoint) const noexcept {
    return per_endpoint_[static_cast<int>(endpoint)].load();
}

void MockTransport::reset_counters() noexcept {
    calls_ = 0;
    for (auto& counter : per_endpoint_) {
        counter = 0;
    }
}

HttpReply MockTransport::post(Endpoint endpoint, const std::string& body) {
    ++calls_;
    ++per_endpoint_[static_cast<int>(endpoint)];
    json request;
    try {
        request = json::parse(body);
    } catch (const json::parse_error&) {
        return {400, R"({"error":"request body is not JSON"})"};
    }
    switch (endpoint) {
    case Endpoint::chat:
        return chat(request);
    case Endpoint::embed:
        return embed(request);
    case Endpoint::pos:
        return pos(request);
    }
    return {400, "{}"};
}

HttpReply MockTransport::chat(const json& request) {
    std::string system;
    std::string user;
    for (const auto& message : request.value("messages", json::array())) {
        const auto role = message.value("role", "");
        if (role == "system") {
            system = message.value("content", "");
        } else if (role == "user") {
            user = message.value("content", "");
        }
    }
    json chosen;
    {
        std::lock_guard lock(mutex_);
        if (script_.contains("chat")) {
            const auto& rules = script_["chat"];
            for (std::size_t i = 0; i < rules.size(); ++i) {
                const auto& rule = rules[i];
                if (user.find(rule.value("user_contains", "")) == std::string::npos ||
                    system.find(rule.value("system_contains", "")) == std::string::npos) {
                    continue;
                }
                const auto& responses = rule["responses"];
                chosen = responses[std::min(cursor_[i], responses.size() - 1)];
                ++cursor_[i];
                break;
            }
        }
        if (chosen.is_null() && script_.contains("chat_default")) {
            chosen = script_["chat_default"];
        }
    }
    if (chosen.is_null()) {
        return {400, R"({"error":"no scripted response"})"};
    }

    std::string content;
    std::string finish = "stop";
    if (chosen.is_string()) {
        content = chosen.get<std::string>();
    } else if (chosen.is_object()) {
        if (chosen.contains("status")) {
            const int status = chosen["status"].get<int>();
            if (status < 200 || status >= 300) {
                return {status, chosen.value("body", std::string(R"({"error":"scripted failure"})"))};
            }
        }
        content = chosen.value("text", "");
        finish = chosen.value("finish_reason", "stop");
    }
    const json reply = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}},
                                                  {"finish_reason", finish}}})}};
    return {200, reply.dump()};
}

HttpReply MockTransport::embed(const json& request) const {
    const std::string input = request.value("input", "");
    const json settings = script_.value("embed", json::object());
    const std::string mode = settings.value("mode", "hash");
    const std::size_t dim = settings.value("dim", 16);
    const bool token_level = settings.value("token_level", true);
    const json explicit_vectors = settings.value("vectors", json::object());
    if (dim == 0) {
        return {500, R"({"error":"dim must be positive"})"};
    }

    auto tokens = text::tokenize(input);
    std::vector<std::vector<double>> vectors;
    vectors.reserve(tokens.size());
    for (const auto& token : tokens) {
        if (explicit_vectors.contains(token)) {
            vectors.push_back(explicit_vectors[token].get<std::vector<double>>());
            continue;
        }
        std::vector<double> v(dim, 0.0);
        if (mode == "basis") {
            v[fnv1a64(token) % dim] = 1.0;
        } else {
            Rng rng(fnv1a64(token));
            for (double& x : v) {
                x = rng.normal();
            }
        }
        vectors.push_back(unit(std::move(v)));
    }
    if (token_level) {
        return {200, json{{"tokens", tokens}, {"vectors", vectors}}.dump()};
    }
    std::vector<double> pooled(vectors.empty() ? dim : vectors.front().size(), 0.0);
    for (const auto& v : vectors) {
        for (std::size_t i = 0; i < pooled.size() && i < v.size(); ++i) {
            pooled[i] += v[i];
        }
    }
    return {200, json{{"embedding", unit(std::move(pooled))}}.dump()};
}

HttpReply MockTransport::pos(const json& request) const {
    const json settings = script_.value("pos", json::object());
    if (!settings.value("enabled", true)) {
        return {501, R"({"error":"pos tagging not supported"})"};
    }
    const std::string input = request.value("input", "");
    const auto tokens = text::tokenize(input);
    std::vector<std::string> tags;
    tags.reserve(tokens.size());
    for (const auto& token : tokens) {
        tags.emplace_back(text::is_numeric(token) ? "NUM" : text::is_punctuation(token) ? "PUNCT" : "X");
    }
    return {200, json{{"tokens", tokens}, {"tags", tags}, {"tagset", {"NUM", "PUNCT", "X"}}}.dump()};
}

// ---------------------------------------------------------------------------
// Gateway

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const noexcept {
    if (retry < 1 || base_delay.count() <= 0) {
        return std::chrono::milliseconds(0);
    }
    const int shift = std::min(retry - 1, 30);
    const auto scaled = base_delay.count() * (std::int64_t{1} << shift);
    return std::chrono::milliseconds(std::min<std::int64_t>(scaled, max_delay.count()));
}

namespace {

void store(const std::filesystem::path& cache_file, Endpoint endpoint, const std::string& request_body,
           const std::string& response_body) {
    if (cache_file.empty()) {
        return;
    }
    const json entry = {{"endpoint", endpoint_name(endpoint)},
                        {"request", json::parse(request_body)},
                        {"response", response_body}};
    io::write_file_atomic(cache_file, entry.dump());
}

std::filesystem::path cache_path(const GatewayConfig& config, Endpoint endpoint, const std::string& body) {
    if (config.cache_dir.empty()) {
        return {};
    }
    return config.cache_dir / (sha256_hex(std::string(endpoint_name(endpoint)) + "\n" + body) + ".json");
}

} // namespace

Gateway::Gateway(std::shared_ptr<Transport> transport, GatewayConfig config)
    : transport_(std::move(transport)), config_(std::move(config)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_in_flight))) {
    if (!transport_) {
        throw PreconditionError("Gateway: transport is required");
    }
    if (!config_.cache_dir.empty()) {
        std::filesystem::create_directories(config_.cache_dir);
    }
}

std::string Gateway::chat_body(const ChatRequest& request) {
    json body = {{"model", request.model_tag},
                 {"messages", json::array({{{"role", "system"}, {"content", request.system_prompt}},
                                           {{"role", "user"}, {"content", request.user_prompt}}})},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens}};
    if (request.nonce != 0) {
        body["seed"] = request.nonce;
    }
    return body.dump();
}

Gateway::Exchange Gateway::exchange(Endpoint endpoint, const std::string& request_body) {
    const auto cache_file = cache_path(config_, endpoint, request_body);
    if (!cache_file.empty()) {
        std::ifstream in(cache_file, std::ios::binary);
        if (in) {
            try {
                const json entry = json::parse(in);
                ++cache_hits_;
                return {entry.at("response").get<std::string>(), true};
            } catch (const json::exception&) {
                // Unreadable entries are refetched and overwritten.
            }
        }
    }

    HttpReply reply;
    for (int attempt = 0;; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(config_.retry.delay_for(attempt));
        }
        {
            in_flight_.acquire();
            struct Release {
                std::counting_semaphore<>& sem;
                ~Release() { sem.release(); }
            } release{in_flight_};
            ++attempts_;
            reply = transport_->post(endpoint, request_body);
        }
        if (reply.status >= 200 && reply.status < 300) {
            break;
        }
        const std::string what = std::string(endpoint_name(endpoint)) + ": HTTP " + std::to_string(reply.status) +
                                 ": " + excerpt(reply.body);
        if (!retryable(reply.status)) {
            if (endpoint != Endpoint::chat && (reply.status == 404 || reply.status == 501)) {
                throw CapabilityError(what, reply.status);
            }
            throw ProviderError(what, reply.status);
        }
        if (attempt >= config_.retry.max_retries) {
            throw TransportError(what + " (gave up after " + std::to_string(attempt + 1) + " attempts)", reply.status);
        }
    }
    return {std::move(reply.body), false};
}


ChatResponse Gateway::complete(const ChatRequest& request) {
    if (request.temperature < 0.0 || request.temperature > 2.0) {
        throw PreconditionError("complete: temperature must lie in [0, 2]");
    }
    if (request.max_tokens <= 0) {
        throw PreconditionError("complete: max_tokens must be positive");
    }
    const std::string body = chat_body(request);
    auto [reply, cached] = exchange(Endpoint::chat, body);
    ChatResponse response = parse_chat(reply);
    if (!cached) {
        store(cache_path(config_, Endpoint::chat, body), Endpoint::chat, body, reply);
    }
    response.from_cache = cached;
    return response;
}

json Gateway::embed_response(std::string_view text) {
    if (text.empty()) {
        throw PreconditionError("embed: text must be non-empty");
    }
    const std::string body = json{{"model", config_.embed_model}, {"input", text}}.dump();
    auto [reply, cached] = exchange(Endpoint::embed, body);
    json parsed = parse_or_throw(reply, Endpoint::embed);
    const bool token_level = parsed.contains("tokens") && parsed.contains("vectors");
    if (!token_level && !parsed.contains("embedding")) {
        throw ProviderError("embed: response has neither token vectors nor an embedding: " + excerpt(reply), 200);
    }
    if (!cached) {
        store(cache_path(config_, Endpoint::embed, body), Endpoint::embed, body, reply);
    }
    return parsed;
}

TokenEmbeddings Gateway::embed_tokens(std::string_view text) {
    const json parsed = embed_response(text);
    if (!parsed.contains("tokens") || !parsed.contains("vectors")) {
        throw CapabilityError("embed: provider returns only pooled embeddings; use the whole-text fallback");
    }
    TokenEmbeddings out;
    parsed["tokens"].get_to(out.tokens);
    parsed["vectors"].get_to(out.vectors);
    if (out.tokens.size() != out.vectors.size()) {
        throw ProviderError("embed: token and vector counts differ");
    }
    for (const auto& v : out.vectors) {
        if (v.empty() || v.size() != out.vectors.front().size()) {
            throw ProviderError("embed: vectors must share one positive dimension");
        }
    }
    return out;
}

std::vector<double> Gateway::embed_text(std::string_view text) {
    const json parsed = embed_response(text);
    if (parsed.contains("embedding")) {
        return parsed["embedding"].get<std::vector<double>>();
    }
    const auto vectors = parsed["vectors"].get<std::vector<std::vector<double>>>();
    if (vectors.empty()) {
        throw ProviderError("embed: no token vectors for non-empty text");
    }
    std::vector<double> mean(vectors.front().size(), 0.0);
    for (const auto& v : vectors) {
        if (v.size() != mean.size()) {
            throw ProviderError("embed: vectors must share one dimension");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            mean[i] += v[i] / static_cast<double>(vectors.size());
        }
    }
    return mean;
}

PosTagging Gateway::pos_tag(std::string_view text) {
    if (text.empty()) {
        throw PreconditionError("pos_tag: text must be non-empty");
    }
    const std::string body = json{{"model", config_.pos_model}, {"input", text}}.dump();
    auto [reply, cached] = exchange(Endpoint::pos, body);
    const json parsed = parse_or_throw(reply, Endpoint::pos);
    if (!parsed.contains("tokens") || !parsed.contains("tags")) {
        throw ProviderError("pos: response lacks tokens/tags: " + excerpt(reply), 200);
    }
    PosTagging out;
    parsed["tokens"].get_to(out.tokens);
    parsed["tags"].get_to(out.tags);
    if (parsed.contains("tagset")) {
        parsed["tagset"].get_to(out.tagset);
    }
    if (out.tokens.size() != out.tags.size()) {
        throw ProviderError("pos: token and tag counts differ");
    }
    if (!out.tagset.empty()) {
        for (const auto& tag : out.tags) {
            if (std::find(out.tagset.begin(), out.tagset.end(), tag) == out.tagset.end()) {
                throw ProviderError("pos: tag " + tag + " is outside the declared tagset");
            }
        }
    }
    if (!cached) {
        store(cache_path(config_, Endpoint::pos, body), Endpoint::pos, body, reply);
    }
    return out;
}

} // namespace judgebench::llm
