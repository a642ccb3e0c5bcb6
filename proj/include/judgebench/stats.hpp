#pragma once

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace judgebench::stats {

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr std::size_t kDefaultResamples = 10'000;
/// Wilcoxon p-values are exact up to this many non-zero differences.
inline constexpr std::size_t kExactWilcoxonMaxN = 12;

/// values[k][j] = score of the model personalized to judges[k] on test set j.
struct ScoreMatrix {
    std::vector<std::string> judges;
    std::vector<std::vector<double>> values;
    std::string metric_name;
    bool higher_is_better = true;

    /// Throws PreconditionError unless square, J >= 2 and finite.
    void validate() const;
};

/// Per-item scores on each test set: items[k][j][i] is model k on item i of
/// test set j. Every model must cover the same items of a test set.
using PerItemScores = std::vector<std::vector<std::vector<double>>>;

/// Test-set centered gap per column j: r_jj minus the mean of the other
/// models on the same test set. Flipped for lower-is-better metrics so a
/// positive gap always favours the matched model.
[[nodiscard]] std::vector<double> centered_gaps(const ScoreMatrix& m);

struct WilcoxonResult {
    double statistic = 0.0; ///< min(W+, W-)
    double w_plus = 0.0;
    double p_two_sided = 1.0;
    std::size_t n_used = 0; ///< after dropping zeros
    bool exact = false;
    bool degenerate = false; ///< no non-zero differences
};

/// Signed-rank test on paired differences. Zeros are dropped, ties get
/// average ranks. Exact two-sided p by enumerating the sign-flip
/// distribution when n <= 12, otherwise the normal approximation with
/// continuity and tie corrections.
[[nodiscard]] WilcoxonResult wilcoxon_signed_rank(std::span<const double> deltas);
/// Forces the normal approximation regardless of n.
[[nodiscard]] WilcoxonResult wilcoxon_signed_rank_normal(std::span<const double> deltas);

struct BootstrapResult {
    double mean_gap = 0.0;
    double p = 1.0;
};

/// Paired bootstrap over items. Each resample draws n item indices with
/// replacement and averages matched - other; p is twice the smaller tail
/// fraction of resampled means at or beyond 0, capped at 1. Resample b uses
/// its own stream derived from (seed, b).
[[nodiscard]] BootstrapResult paired_bootstrap(std::span<const double> matched, std::span<const double> other,
                                               std::size_t resamples = kDefaultResamples, std::uint64_t seed = 0);

/// Two raters, binary labels.
struct AgreementTable {
    std::size_t both_yes = 0;
    std::size_t both_no = 0;
    std::size_t yes_no = 0; ///< rater A yes, rater B no
    std::size_t no_yes = 0; ///< rater A no, rater B yes

    [[nodiscard]] std::size_t total() const noexcept { return both_yes + both_no + yes_no + no_yes; }
};

/// Gwet's AC1 for two raters and two categories.
[[nodiscard]] double gwet_ac1(const AgreementTable& table);

struct GapResult {
    std::vector<std::string> judges;
    std::vector<double> deltas;
    std::vector<double> p_values;
    std::vector<bool> significant;
    double mean_delta = 0.0;
    double fraction_significant = 0.0;
};

/// Centered gaps plus a per-judge paired bootstrap of the matched model
/// against the per-item mean of the other models.
[[nodiscard]] GapResult specificity_report(const ScoreMatrix& m, const PerItemScores& items,
                                           std::size_t resamples = kDefaultResamples, std::uint64_t seed = 0,
                                           double alpha = kDefaultAlpha);

void to_json(nlohmann::json& j, const GapResult& result);
void to_json(nlohmann::json& j, const WilcoxonResult& result);

/// "0.700 (0.93)": mean gap with the fraction of significant judges.
[[nodiscard]] std::string format_gap_cell(double mean_delta, double fraction_significant, int precision = 3);

/// Markdown table. `cells[r][c]` is already formatted.
[[nodiscard]] std::string markdown_table(const std::vector<std::string>& header,
                                         const std::vector<std::vector<std::string>>& cells);

} // namespace judgebench::stats
