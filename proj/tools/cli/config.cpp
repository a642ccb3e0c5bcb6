#include "cli/config.hpp"

#include "judgebench/corpus.hpp"
#include "judgebench/error.hpp"
#include "judgebench/io.hpp"
#include "judgebench/llm_gateway.hpp"
#include "judgebench/retrieval.hpp"
#include "judgebench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <set>

namespace judgebench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig::RunConfig()
    : models{llm::kDefaultExtractorModel, llm::kDefaultExtractorTemperature, llm::kDefaultValidatorModel,
             llm::kDefaultValidatorTemperature},
      min_docs(corpus::kDefaultMinDocs), test_ratio(corpus::kDefaultTestRatio),
      prefix_fraction(corpus::kDefaultPrefixFraction),
      ablation_fractions(std::begin(corpus::kDefaultAblationFractions), std::end(corpus::kDefaultAblationFractions)),
      rag_k(std::begin(retrieval::kDefaultKValues), std::end(retrieval::kDefaultKValues)),
      alpha(stats::kDefaultAlpha), resamples(stats::kDefaultResamples) {}

namespace {

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> known) {
    if (!j.is_object()) {
        throw UsageError("config: " + std::string(where) + " must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw UsageError("config: unknown key " + std::string(where) + "." + key);
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw UsageError(std::string("config: bad value for ") + key);
        }
    }
}

void read_path(const json& j, const char* key, fs::path& out) {
    std::string s;
    read(j, key, s);
    if (!s.empty()) {
        out = s;
    }
}

} // namespace

void to_json(json& j, const RunConfig& c) {
    j = json{
        {"corpus", c.corpus.string()},
        {"run_dir", c.run_dir.string()},
        {"cache_dir", c.cache_dir.string()},
        {"mock_provider", c.mock_provider ? json(c.mock_provider->string()) : json(nullptr)},
        {"seed", c.seed},
        {"provider",
         {{"chat_url", c.provider.chat_url},
          {"embed_url", c.provider.embed_url},
          {"pos_url", c.provider.pos_url},
          {"api_key_env", c.provider.api_key_env},
          {"timeout_s", c.provider.timeout_s},
          {"max_in_flight", c.provider.max_in_flight},
          {"max_retries", c.provider.max_retries},
          {"base_delay_ms", c.provider.base_delay_ms},
          {"max_delay_ms", c.provider.max_delay_ms},
          {"embed_model", c.provider.embed_model},
          {"pos_model", c.provider.pos_model}}},
        {"models",
         {{"extractor", c.models.extractor},
          {"extractor_temperature", c.models.extractor_temperature},
          {"validator", c.models.validator},
          {"validator_temperature", c.models.validator_temperature},
          {"max_tokens", c.models.max_tokens},
          {"max_question_words", c.models.max_question_words}}},
        {"min_docs", c.min_docs},
        {"test_ratio", c.test_ratio},
        {"prefix_fraction", c.prefix_fraction},
        {"strip_niqqud", c.strip_niqqud},
        {"ablation_fractions", c.ablation_fractions},
        {"rag_k", c.rag_k},
        {"alpha", c.alpha},
        {"resamples", c.resamples},
        {"workers", c.workers},
        {"embed_metrics", c.embed_metrics},
        {"pos_metrics", c.pos_metrics},
        {"discern",
         {{"features", c.discern.features},
          {"epochs", c.discern.epochs},
          {"learning_rate", c.discern.learning_rate},
          {"l2", c.discern.l2},
          {"test_fraction", c.discern.test_fraction}}},
    };
}

void from_json(const json& j, RunConfig& c) {
    c = RunConfig{};
    reject_unknown(j, "root",
                   {"corpus", "run_dir", "cache_dir", "mock_provider", "seed", "provider", "models", "min_docs",
                    "test_ratio", "prefix_fraction", "strip_niqqud", "ablation_fractions", "rag_k", "alpha",
                    "resamples", "workers", "embed_metrics", "pos_metrics", "discern"});
    read_path(j, "corpus", c.corpus);
    read_path(j, "run_dir", c.run_dir);
    read_path(j, "cache_dir", c.cache_dir);
    if (auto it = j.find("mock_provider"); it != j.end() && it->is_string()) {
        c.mock_provider = fs::path(it->get<std::string>());
    }
    read(j, "seed", c.seed);
    if (auto it = j.find("provider"); it != j.end()) {
        const json& p = *it;
        reject_unknown(p, "provider",
                       {"chat_url", "embed_url", "pos_url", "api_key_env", "timeout_s", "max_in_flight",
                        "max_retries", "base_delay_ms", "max_delay_ms", "embed_model", "pos_model"});
        read(p, "chat_url", c.provider.chat_url);
        read(p, "embed_url", c.provider.embed_url);
        read(p, "pos_url", c.provider.pos_url);
        read(p, "api_key_env", c.provider.api_key_env);
        read(p, "timeout_s", c.provider.timeout_s);
        read(p, "max_in_flight", c.provider.max_in_flight);
        read(p, "max_retries", c.provider.max_retries);
        read(p, "base_delay_ms", c.provider.base_delay_ms);
        read(p, "max_delay_ms", c.provider.max_delay_ms);
        read(p, "embed_model", c.provider.embed_model);
        read(p, "pos_model", c.provider.pos_model);
    }
    if (auto it = j.find("models"); it != j.end()) {
        const json& m = *it;
        reject_unknown(m, "models",
                       {"extractor", "extractor_temperature", "validator", "validator_temperature", "max_tokens",
                        "max_question_words"});
        read(m, "extractor", c.models.extractor);
        read(m, "extractor_temperature", c.models.extractor_temperature);
        read(m, "validator", c.models.validator);
        read(m, "validator_temperature", c.models.validator_temperature);
        read(m, "max_tokens", c.models.max_tokens);
        read(m, "max_question_words", c.models.max_question_words);
    }
    read(j, "min_docs", c.min_docs);
    read(j, "test_ratio", c.test_ratio);
    read(j, "prefix_fraction", c.prefix_fraction);
    read(j, "strip_niqqud", c.strip_niqqud);
    read(j, "ablation_fractions", c.ablation_fractions);
    read(j, "rag_k", c.rag_k);
    read(j, "alpha", c.alpha);
    read(j, "resamples", c.resamples);
    read(j, "workers", c.workers);
    read(j, "embed_metrics", c.embed_metrics);
    read(j, "pos_metrics", c.pos_metrics);
    if (auto it = j.find("discern"); it != j.end()) {
        const json& d = *it;
        reject_unknown(d, "discern", {"features", "epochs", "learning_rate", "l2", "test_fraction"});
        if (auto f = d.find("features"); f != d.end()) {
            try {
                c.discern.features = f->get<discern::FeatureSpec>();
            } catch (const json::exception&) {
                throw UsageError("config: bad value for discern.features");
            }
        }
        read(d, "epochs", c.discern.epochs);
        read(d, "learning_rate", c.discern.learning_rate);
        read(d, "l2", c.discern.l2);
        read(d, "test_fraction", c.discern.test_fraction);
    }
}

void validate(const RunConfig& c) {
    auto require = [](bool ok, const std::string& message) {
        if (!ok) {
            throw UsageError("config: " + message);
        }
    };
    require(c.min_docs >= 1, "min_docs must be at least 1");
    require(c.test_ratio > 0.0 && c.test_ratio < 1.0, "test_ratio must be in (0, 1)");
    require(c.prefix_fraction > 0.0 && c.prefix_fraction < 1.0, "prefix_fraction must be in (0, 1)");
    require(!c.ablation_fractions.empty(), "ablation_fractions must not be empty");
    for (double f : c.ablation_fractions) {
        require(f > 0.0 && f <= 1.0, "ablation fractions must be in (0, 1]");
    }
    require(!c.rag_k.empty(), "rag_k must not be empty");
    for (std::size_t k : c.rag_k) {
        require(k >= 1, "rag_k values must be positive");
    }
    require(c.alpha > 0.0 && c.alpha < 1.0, "alpha must be in (0, 1)");
    require(c.resamples >= 1, "resamples must be positive");
    require(c.workers >= 1, "workers must be positive");
    require(c.models.extractor_temperature >= 0.0 && c.models.validator_temperature >= 0.0,
            "temperatures must be non-negative");
    require(c.models.max_tokens > 0, "max_tokens must be positive");
    require(c.provider.max_in_flight >= 1, "provider.max_in_flight must be positive");
    require(c.provider.max_retries >= 0, "provider.max_retries must be non-negative");
    require(c.discern.test_fraction > 0.0 && c.discern.test_fraction < 1.0, "discern.test_fraction must be in (0, 1)");
    require(c.discern.epochs >= 1, "discern.epochs must be positive");
    require(c.discern.learning_rate > 0.0 && c.discern.learning_rate * c.discern.l2 < 1.0,
            "discern.learning_rate must be positive and learning_rate * l2 below 1");
}

RunConfig resolve_config(const Overrides& overrides) {
    RunConfig config;
    if (overrides.config) {
        if (!fs::exists(*overrides.config)) {
            throw UsageError("config file not found: " + overrides.config->string());
        }
        json j;
        try {
            j = json::parse(io::read_file(*overrides.config));
        } catch (const json::parse_error& e) {
            throw UsageError("config: " + overrides.config->string() + ": " + e.what());
        }
        config = j.get<RunConfig>();
        const fs::path base = overrides.config->parent_path();
        auto anchor = [&](fs::path& p) {
            if (!p.empty() && p.is_relative()) {
                p = base / p;
            }
        };
        anchor(config.corpus);
        anchor(config.run_dir);
        anchor(config.cache_dir);
        if (config.mock_provider) {
            anchor(*config.mock_provider);
        }
    }
    if (overrides.seed) {
        config.seed = *overrides.seed;
    }
    if (overrides.cache_dir) {
        config.cache_dir = *overrides.cache_dir;
    }
    if (overrides.mock_provider) {
        config.mock_provider = *overrides.mock_provider;
    }
    if (overrides.run_dir) {
        config.run_dir = *overrides.run_dir;
    }
    if (overrides.corpus) {
        config.corpus = *overrides.corpus;
    }
    validate(config);
    return config;
}

} // namespace judgebench::cli
