#pragma once

#include "judgebench/stats.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace judgebench::discern {

enum class FeatureKind { char_ngram, embedding };

struct FeatureSpec {
    FeatureKind kind = FeatureKind::char_ngram;
    std::vector<int> orders{2, 3, 4};
    int hash_bits = 18;
    std::size_t embedding_dim = 0; ///< only for FeatureKind::embedding

    [[nodiscard]] std::size_t dimension() const;
    bool operator==(const FeatureSpec&) const = default;
};

/// Sorted by index, no duplicates.
struct SparseVector {
    std::vector<std::pair<std::uint32_t, double>> entries;
    bool empty_input = false; ///< no n-grams (text shorter than the smallest order)

    [[nodiscard]] double dot(const SparseVector& other) const;
};

/// Hashed character n-gram term frequencies over code points, L2-normalized.
/// Throws PreconditionError on empty text.
[[nodiscard]] SparseVector featurize(std::string_view text, const FeatureSpec& spec = {});

using TextEmbedder = std::function<std::vector<double>(std::string_view)>;

/// Dense embedding as a sparse vector; spec.kind must be embedding and
/// spec.embedding_dim must match the embedder's output.
[[nodiscard]] SparseVector featurize_embedding(std::string_view text, const FeatureSpec& spec,
                                               const TextEmbedder& embedder);

enum class Source { real_judge, real_other_judge, generated };

struct LabeledSentence {
    std::string id;
    std::string text;
    bool positive = false;
    Source source = Source::real_judge;
    std::string model_tag; ///< for generated negatives
};

struct TrainOptions {
    std::size_t epochs = 200;
    double learning_rate = 0.5;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinPerClass = 10;

struct AuthorshipModel {
    FeatureSpec spec;
    std::vector<double> weights;
    double bias = 0.0;
    TrainOptions options;
    std::vector<std::string> training_ids; ///< sorted

    [[nodiscard]] double probability(const SparseVector& x) const;
};

/// Optional featurizer override (embedding provider). When empty, featurize()
/// with the model's spec is used.
using Featurizer = std::function<SparseVector(std::string_view)>;

/// Class-balanced L2 logistic regression by full-batch gradient descent from
/// zero weights. Needs at least kMinPerClass examples in each class.
[[nodiscard]] AuthorshipModel train(const std::vector<LabeledSentence>& positives,
                                    const std::vector<LabeledSentence>& negatives, const FeatureSpec& spec = {},
                                    TrainOptions options = {}, const Featurizer& featurizer = {});

/// Fraction correct at a 0.5 threshold. Throws PreconditionError on empty
/// input or when a held-out id was used for training.
[[nodiscard]] double evaluate(const AuthorshipModel& model, const std::vector<LabeledSentence>& held_out,
                              const Featurizer& featurizer = {});

struct SettingInput {
    std::string name;
    std::string group; ///< "baseline", "retrieval", "personalized" or free text
    std::vector<LabeledSentence> negatives;
};

struct SettingResult {
    std::string name;
    std::string group;
    double accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
};

struct RunOptions {
    FeatureSpec spec;
    TrainOptions train;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// One classifier per setting with identical hyperparameters. Positives and
/// negatives are balanced by a seeded draw from the larger pool, then each
/// class is split into train and held-out parts.
[[nodiscard]] std::vector<SettingResult> run_settings(const std::string& judge_id,
                                                      const std::vector<LabeledSentence>& real_sentences,
                                                      const std::vector<SettingInput>& settings,
                                                      const RunOptions& options = {},
                                                      const Featurizer& featurizer = {});

/// Held-out accuracy after randomly permuting labels across the balanced
/// pool, repeated `permutations` times.
[[nodiscard]] std::vector<double> permutation_accuracies(const std::vector<LabeledSentence>& positives,
                                                         const std::vector<LabeledSentence>& negatives,
                                                         std::size_t permutations, const RunOptions& options = {},
                                                         const Featurizer& featurizer = {});

/// Accuracy per judge for one setting, used for the cross-judge summary.
struct SettingSummary {
    std::string name;
    std::string group;
    std::map<std::string, double> accuracy_by_judge;
};

struct SummaryRow {
    std::string name;
    std::string group;
    double mean_accuracy = 0.0;
    stats::WilcoxonResult vs_chance;
    bool differs_from_chance = false;
};

/// Mean accuracy across judges and a signed-rank test of (accuracy - 0.5).
[[nodiscard]] std::vector<SummaryRow> summarize(const std::vector<SettingSummary>& settings,
                                                double alpha = stats::kDefaultAlpha);
/// Grouped markdown table; "*" marks settings significantly different from chance.
[[nodiscard]] std::string summary_markdown(const std::vector<SummaryRow>& rows);

void to_json(nlohmann::json& j, const SettingResult& r);
void to_json(nlohmann::json& j, const SummaryRow& r);
void to_json(nlohmann::json& j, const FeatureSpec& spec);
void from_json(const nlohmann::json& j, FeatureSpec& spec);

} // namespace judgebench::discern
