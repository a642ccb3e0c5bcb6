#pragma once

#include "judgebench/discernment.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace judgebench::cli {

struct ProviderConfig {
    std::string chat_url = "https://api.openai.com/v1/chat/completions";
    std::string embed_url;
    std::string pos_url;
    std::string api_key_env = "JUDGEBENCH_API_KEY";
    int timeout_s = 120;
    std::size_t max_in_flight = 4;
    int max_retries = 4;
    int base_delay_ms = 500;
    int max_delay_ms = 8000;
    std::string embed_model = "mock-embed";
    std::string pos_model = "mock-pos";
};

struct ModelConfig {
    std::string extractor;
    double extractor_temperature;
    std::string validator;
    double validator_temperature;
    int max_tokens = 2048;
    std::size_t max_question_words = 25;
};

struct DiscernConfig {
    discern::FeatureSpec features;
    std::size_t epochs = 200;
    double learning_rate = 0.5;
    double l2 = 1e-4;
    double test_fraction = 0.2;
};

/// Everything a command reads. Defaults reproduce the published setup.
struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path run_dir = "runs/default";
    std::filesystem::path cache_dir;
    std::optional<std::filesystem::path> mock_provider;
    std::uint64_t seed = 0;

    ProviderConfig provider;
    ModelConfig models;

    std::size_t min_docs;
    double test_ratio;
    double prefix_fraction;
    bool strip_niqqud = false;
    std::vector<double> ablation_fractions;
    std::vector<std::size_t> rag_k;
    double alpha;
    std::size_t resamples;
    std::size_t workers = 1;
    bool embed_metrics = true;
    bool pos_metrics = true;
    DiscernConfig discern;

    RunConfig();
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Unknown keys are rejected (UsageError) so typos do not silently fall back
/// to defaults.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Command-line overrides applied after the config file.
struct Overrides {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> cache_dir;
    std::optional<std::filesystem::path> mock_provider;
    std::optional<std::filesystem::path> run_dir;
    std::optional<std::filesystem::path> corpus;
};

/// Loads the config file (relative paths inside it resolve against its
/// directory), then applies overrides and validates.
[[nodiscard]] RunConfig resolve_config(const Overrides& overrides);

/// Throws UsageError on out-of-range values.
void validate(const RunConfig& c);

} // namespace judgebench::cli
