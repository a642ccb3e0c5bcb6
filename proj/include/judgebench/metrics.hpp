#pragma once

#include "judgebench/llm_gateway.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace judgebench::metrics {

enum class Task { qa, next_token };

[[nodiscard]] std::string_view task_name(Task task) noexcept;
[[nodiscard]] Task parse_task(std::string_view name);

/// One candidate/reference pair to score.
struct GenerationRecord {
    std::string judge_id;
    Task task = Task::qa;
    std::string item_id;
    std::string prompt;
    std::string reference;
    std::string candidate;
    std::string model_tag;
};

/// bleu in [0,100]; rouge* in [0,1]; embed_f in [-1,1]; pos_jsd in [0,1].
/// NaN marks a metric whose provider was unavailable.
struct MetricVector {
    double bleu = 0.0;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double embed_f = 0.0;
    double pos_jsd = 0.0;
};

inline constexpr double kBleuEpsilon = 1e-9;

/// Sentence BLEU on the metric tokenizer's tokens.
///
/// Clipped n-gram precisions for n = 1..min(4, |candidate|) with uniform
/// weights, zero precisions replaced by 1e-9, brevity penalty exp(1 - r/c)
/// when c < r. Scaled to 0..100.
[[nodiscard]] double bleu(std::string_view candidate, std::string_view reference);
[[nodiscard]] double bleu_tokens(std::span<const std::string> candidate, std::span<const std::string> reference);

enum class RougeVariant { r1, r2, rL };

/// F1 of unigram/bigram overlap, or of the longest common subsequence.
/// When neither side has an n-gram of the requested order the score is 1 for
/// identical token sequences and 0 otherwise.
[[nodiscard]] double rouge(std::string_view candidate, std::string_view reference, RougeVariant variant);
[[nodiscard]] double rouge_tokens(std::span<const std::string> candidate, std::span<const std::string> reference,
                                  RougeVariant variant);

/// Length of the longest common subsequence.
[[nodiscard]] std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct EmbedScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    bool degraded = false; ///< whole-text cosine stood in for token matching
};

/// Greedy matching over token vectors: precision averages, over candidate
/// tokens, the best cosine against any reference token; recall is the mirror
/// image. f is their harmonic mean when both are positive and min(P, R)
/// otherwise, which keeps f within [-1, 1] and below the best pairwise cosine.
/// No IDF weighting, no baseline rescaling.
[[nodiscard]] EmbedScore embed_f(const llm::TokenEmbeddings& candidate, const llm::TokenEmbeddings& reference);

/// Degraded score: cosine of two whole-text vectors in all three fields.
[[nodiscard]] EmbedScore embed_f_whole_text(std::span<const double> candidate, std::span<const double> reference);

[[nodiscard]] double cosine(std::span<const double> a, std::span<const double> b);

using TagCounts = std::map<std::string, double>;

/// Jensen-Shannon divergence, base 2, between two count maps (normalized
/// internally over the union of keys). Both must have positive mass.
[[nodiscard]] double jsd(const TagCounts& p, const TagCounts& q);
[[nodiscard]] double jsd(std::span<const double> p, std::span<const double> q);

using Tagger = std::function<llm::PosTagging(std::string_view)>;
using TokenEmbedder = std::function<llm::TokenEmbeddings(std::string_view)>;
using TextEmbedder = std::function<std::vector<double>(std::string_view)>;

/// Pools tag counts over each side and returns JSD between the two pools.
/// Texts the tagger rejects are skipped (and named in `warnings`); a side
/// left with no tags throws DataError.
[[nodiscard]] double pos_jsd(const std::vector<std::string>& candidate_texts,
                             const std::vector<std::string>& reference_texts, const Tagger& tagger,
                             std::vector<std::string>* warnings = nullptr);

/// Remote capabilities used by score_records. Empty functions are skipped.
struct Providers {
    TokenEmbedder token_embedder;
    TextEmbedder text_embedder; ///< whole-text fallback when token vectors are unavailable
    Tagger tagger;

    /// Gateway-backed providers.
    [[nodiscard]] static Providers from_gateway(llm::Gateway& gateway);
};

struct RecordScore {
    std::string item_id;
    std::string judge_id;
    std::string model_tag;
    Task task = Task::qa;
    MetricVector metrics;  ///< pos_jsd here is the single pair's divergence
    EmbedScore embed;
};

/// Unweighted means per (task, judge, model); pos_jsd is recomputed on the
/// pooled tag counts of the group rather than averaged.
struct AggregateRow {
    Task task = Task::qa;
    std::string judge_id;
    std::string model_tag;
    std::size_t count = 0;
    std::size_t embed_degraded = 0;
    MetricVector mean;
};

struct ScoreTable {
    std::vector<RecordScore> records;
    std::vector<AggregateRow> aggregates;
    std::vector<std::string> errors;
};

struct ScoreOptions {
    std::size_t threads = 1;
};

/// Scores every record. A record that fails (empty text, provider error) is
/// reported in `errors` and left out; it never stops the run.
[[nodiscard]] ScoreTable score_records(const std::vector<GenerationRecord>& records, const Providers& providers,
                                       ScoreOptions options = {});

/// Reads generation-record JSONL: {judge_id, task, item_id, prompt, reference,
/// candidate, model_tag}. task defaults to "qa"; prompt defaults to "".
[[nodiscard]] std::vector<GenerationRecord> load_records(const std::filesystem::path& path);

inline constexpr const char* kScoresCsvHeader =
    "item_id,judge_id,model_tag,task,bleu,rouge1,rouge2,rougeL,embed_p,embed_r,embed_f,embed_degraded,pos_jsd";

[[nodiscard]] std::string scores_to_csv(const ScoreTable& table);
[[nodiscard]] std::vector<RecordScore> parse_scores_csv(std::string_view csv);
[[nodiscard]] nlohmann::json aggregates_to_json(const ScoreTable& table);

/// Names used in CSV/JSON columns and for ScoreMatrix metric_name.
inline constexpr const char* kMetricNames[] = {"bleu", "rouge1", "rouge2", "rougeL", "embed_f", "pos_jsd"};
[[nodiscard]] double metric_value(const MetricVector& m, std::string_view name);
[[nodiscard]] bool higher_is_better(std::string_view metric_name);

} // namespace judgebench::metrics
