#pragma once

#include "judgebench/text.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace judgebench::corpus {

inline constexpr std::size_t kDefaultMinDocs = 100;
inline constexpr double kDefaultPrefixFraction = 0.15;
inline constexpr double kDefaultTestRatio = 0.1;
/// Training-data fractions for the data-size ablation.
inline constexpr double kDefaultAblationFractions[] = {0.25, 0.5, 0.75, 1.0};

/// One judge-authored summary-judgment section.
struct VerdictDoc {
    std::string judge_id;
    std::string case_id;
    std::string text;
    std::optional<std::string> date;
};

struct JudgeProfile {
    std::string judge_id;
    std::size_t doc_count = 0;
    std::size_t token_count = 0;
};

/// Per-judge train/test partition of item ids. Both lists are sorted.
struct DatasetSplit {
    std::string judge_id;
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    double fraction = 1.0;

    bool operator==(const DatasetSplit&) const = default;
};

/// Next-token task: prefix ++ continuation_reference is the source text.
struct PrefixTask {
    std::string case_id;
    std::string judge_id;
    std::string prefix;
    std::string continuation_reference;
    double fraction = kDefaultPrefixFraction;
};

struct SplitItem {
    std::string judge_id;
    std::string item_id;
};

struct FilterResult {
    std::vector<VerdictDoc> kept;
    std::vector<JudgeProfile> profiles; ///< every input judge, sorted by id
};

/// Reads the verdict JSONL. Every record is normalized; bad lines throw
/// DataError naming the line ("line 3: missing field text").
[[nodiscard]] std::vector<VerdictDoc> load_corpus(const std::filesystem::path& path,
                                                  text::NormalizeOptions options = {});

[[nodiscard]] std::vector<JudgeProfile> profile_judges(const std::vector<VerdictDoc>& docs);

/// Keeps the documents of judges with at least min_docs documents.
[[nodiscard]] FilterResult filter_judges(const std::vector<VerdictDoc>& docs, std::size_t min_docs = kDefaultMinDocs);

/// Seeded per-judge shuffle and partition. Deterministic in (ids, seed, ratio);
/// input order is irrelevant. Result is sorted by judge id.
[[nodiscard]] std::vector<DatasetSplit> split_per_judge(const std::vector<SplitItem>& items, double test_ratio,
                                                        std::uint64_t seed);

/// Keeps ceil(fraction * |train|) training items. Subsamples drawn with the
/// same seed are nested across fractions.
[[nodiscard]] DatasetSplit subsample_train(const DatasetSplit& split, double fraction, std::uint64_t seed);

/// Prefix covering the first ceil(fraction * N) whitespace tokens.
[[nodiscard]] PrefixTask make_prefix_task(const VerdictDoc& doc, double fraction = kDefaultPrefixFraction);

/// ceil(fraction * n), at least 1.
[[nodiscard]] std::size_t fractional_count(double fraction, std::size_t n);

void to_json(nlohmann::json& j, const VerdictDoc& doc);
void to_json(nlohmann::json& j, const JudgeProfile& profile);
void to_json(nlohmann::json& j, const DatasetSplit& split);
void from_json(const nlohmann::json& j, DatasetSplit& split);
void to_json(nlohmann::json& j, const PrefixTask& task);

} // namespace judgebench::corpus
