#include "judgebench/stats.hpp"

#include "judgebench/error.hpp"
#include "judgebench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace judgebench::stats {

void ScoreMatrix::validate() const {
    const std::size_t j = judges.size();
    if (j < 2) {
        throw PreconditionError("ScoreMatrix: need at least 2 judges");
    }
    if (values.size() != j) {
        throw PreconditionError("ScoreMatrix: " + std::to_string(values.size()) + " rows for " + std::to_string(j) +
                                " judges");
    }
    for (const auto& row : values) {
        if (row.size() != j) {
            throw PreconditionError("ScoreMatrix: matrix is not square");
        }
        for (double v : row) {
            if (!std::isfinite(v)) {
                throw PreconditionError("ScoreMatrix: missing or non-finite entry");
            }
        }
    }
}

std::vector<double> centered_gaps(const ScoreMatrix& m) {
    m.validate();
    const std::size_t size = m.judges.size();
    std::vector<double> gaps(size);
    for (std::size_t j = 0; j < size; ++j) {
        double others = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            if (k != j) {
                others += m.values[k][j];
            }
        }
        const double gap = m.values[j][j] - others / static_cast<double>(size - 1);
        gaps[j] = m.higher_is_better ? gap : -gap;
    }
    return gaps;
}

namespace {

struct SignedRanks {
    std::vector<double> ranks; ///< average ranks of |d|
    std::vector<bool> positive;
    double tie_term = 0.0;     ///< sum over tie groups of t^3 - t
};

SignedRanks rank_nonzero(std::span<const double> deltas) {
    std::vector<double> nonzero;
    for (double d : deltas) {
        if (!std::isfinite(d)) {
            throw PreconditionError("wilcoxon: non-finite difference");
        }
        if (d != 0.0) {
            nonzero.push_back(d);
        }
    }
    std::vector<std::size_t> order(nonzero.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(nonzero[a]) < std::abs(nonzero[b]); });
    SignedRanks out;
    out.ranks.assign(nonzero.size(), 0.0);
    out.positive.assign(nonzero.size(), false);
    for (std::size_t i = 0; i < order.size();) {
        std::size_t end = i + 1;
        while (end < order.size() && std::abs(nonzero[order[end]]) == std::abs(nonzero[order[i]])) {
            ++end;
        }
        const double average = 0.5 * static_cast<double>(i + 1 + end);
        const double t = static_cast<double>(end - i);
        out.tie_term += t * t * t - t;
        for (std::size_t k = i; k < end; ++k) {
            out.ranks[order[k]] = average;
        }
        i = end;
    }
    for (std::size_t i = 0; i < nonzero.size(); ++i) {
        out.positive[i] = nonzero[i] > 0.0;
    }
    return out;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

WilcoxonResult finish(const SignedRanks& sr, bool force_normal) {
    WilcoxonResult result;
    result.n_used = sr.ranks.size();
    if (result.n_used == 0) {
        result.degenerate = true;
        result.p_two_sided = 1.0;
        return result;
    }
    const double n = static_cast<double>(result.n_used);
    const double total = n * (n + 1.0) / 2.0;
    for (std::size_t i = 0; i < sr.ranks.size(); ++i) {
        if (sr.positive[i]) {
            result.w_plus += sr.ranks[i];
        }
    }
    result.statistic = std::min(result.w_plus, total - result.w_plus);

    if (!force_normal && result.n_used <= kExactWilcoxonMaxN) {
        // Doubled ranks are integers even with average ranks; count sign
        // assignments by subset-sum over them.
        std::vector<long> doubled(sr.ranks.size());
        long doubled_total = 0;
        for (std::size_t i = 0; i < sr.ranks.size(); ++i) {
            doubled[i] = std::lround(2.0 * sr.ranks[i]);
            doubled_total += doubled[i];
        }
        std::vector<double> ways(static_cast<std::size_t>(doubled_total) + 1, 0.0);
        ways[0] = 1.0;
        for (long r : doubled) {
            for (long s = doubled_total; s >= r; --s) {
                ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
            }
        }
        const long observed = std::lround(2.0 * result.statistic);
        double tail = 0.0;
        for (long s = 0; s <= observed; ++s) {
            tail += ways[static_cast<std::size_t>(s)];
        }
        result.exact = true;
        result.p_two_sided = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(result.n_used)));
        return result;
    }

    const double mean = total / 2.0;
    const double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - sr.tie_term / 48.0;
    if (variance <= 0.0) {
        result.p_two_sided = 1.0;
        return result;
    }
    const double z = std::max(0.0, std::abs(result.w_plus - mean) - 0.5) / std::sqrt(variance);
    result.p_two_sided = std::min(1.0, 2.0 * normal_sf(z));
    return result;
}

} // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> deltas) { return finish(rank_nonzero(deltas), false); }

WilcoxonResult wilcoxon_signed_rank_normal(std::span<const double> deltas) {
    return finish(rank_nonzero(deltas), true);
}

BootstrapResult paired_bootstrap(std::span<const double> matched, std::span<const double> other,
                                 std::size_t resamples, std::uint64_t seed) {
    if (matched.size() != other.size()) {
        throw PreconditionError("paired_bootstrap: lists differ in length");
    }
    if (matched.size() < 2) {
        throw PreconditionError("paired_bootstrap: need at least 2 paired items");
    }
    if (resamples == 0) {
        throw PreconditionError("paired_bootstrap: resamples must be positive");
    }
    const std::size_t n = matched.size();
    std::vector<double> gaps(n);
    for (std::size_t i = 0; i < n; ++i) {
        gaps[i] = matched[i] - other[i];
    }
    BootstrapResult result;
    result.mean_gap = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(n);

    std::size_t at_or_below = 0;
    std::size_t at_or_above = 0;
    for (std::size_t b = 0; b < resamples; ++b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += gaps[rng.uniform_index(n)];
        }
        const double mean = sum / static_cast<double>(n);
        at_or_below += mean <= 0.0 ? 1 : 0;
        at_or_above += mean >= 0.0 ? 1 : 0;
    }
    const double tail = static_cast<double>(std::min(at_or_below, at_or_above)) / static_cast<double>(resamples);
    result.p = std::min(1.0, 2.0 * tail);
    return result;
}

double gwet_ac1(const AgreementTable& table) {
    const double total = static_cast<double>(table.total());
    if (total <= 0.0) {
        throw PreconditionError("gwet_ac1: empty agreement table");
    }
    const double observed = static_cast<double>(table.both_yes + table.both_no) / total;
    const double yes_a = static_cast<double>(table.both_yes + table.yes_no) / total;
    const double yes_b = static_cast<double>(table.both_yes + table.no_yes) / total;
    const double prevalence = 0.5 * (yes_a + yes_b);
    const double chance = 2.0 * prevalence * (1.0 - prevalence);
    return (observed - chance) / (1.0 - chance);
}

GapResult specificity_report(const ScoreMatrix& m, const PerItemScores& items, std::size_t resamples,
                             std::uint64_t seed, double alpha) {
    m.validate();
    const std::size_t size = m.judges.size();
    if (items.size() != size) {
        throw PreconditionError("specificity_report: per-item scores must cover every model");
    }
    GapResult result;
    result.judges = m.judges;
    result.deltas = centered_gaps(m);
    const double sign = m.higher_is_better ? 1.0 : -1.0;
    std::size_t significant = 0;
    for (std::size_t j = 0; j < size; ++j) {
        if (items[j].size() != size) {
            throw PreconditionError("specificity_report: per-item scores must cover every test set");
        }
        const auto& matched_raw = items[j][j];
        std::vector<double> matched(matched_raw.size());
        std::vector<double> other(matched_raw.size(), 0.0);
        for (std::size_t k = 0; k < size; ++k) {
            if (items[k][j].size() != matched_raw.size()) {
                throw PreconditionError("specificity_report: models disagree on the items of test set " +
                                        m.judges[j]);
            }
            if (k == j) {
                continue;
            }
            for (std::size_t i = 0; i < matched.size(); ++i) {
                other[i] += sign * items[k][j][i] / static_cast<double>(size - 1);
            }
        }
        for (std::size_t i = 0; i < matched.size(); ++i) {
            matched[i] = sign * matched_raw[i];
        }
        const auto boot = paired_bootstrap(matched, other, resamples, derive_seed(seed, m.judges[j]));
        result.p_values.push_back(boot.p);
        const bool is_significant = boot.p < alpha;
        result.significant.push_back(is_significant);
        significant += is_significant ? 1 : 0;
    }
    result.mean_delta = std::accumulate(result.deltas.begin(), result.deltas.end(), 0.0) / static_cast<double>(size);
    result.fraction_significant = static_cast<double>(significant) / static_cast<double>(size);
    return result;
}

void to_json(nlohmann::json& j, const GapResult& result) {
    nlohmann::json per_judge = nlohmann::json::array();
    for (std::size_t i = 0; i < result.judges.size(); ++i) {
        per_judge.push_back({{"judge_id", result.judges[i]},
                             {"delta", result.deltas[i]},
                             {"p", result.p_values.empty() ? nlohmann::json(nullptr) : nlohmann::json(result.p_values[i])},
                             {"significant", result.significant.empty() ? false : static_cast<bool>(result.significant[i])}});
    }
    j = {{"mean_delta", result.mean_delta},
         {"fraction_significant", result.fraction_significant},
         {"per_judge", per_judge}};
}

void to_json(nlohmann::json& j, const WilcoxonResult& result) {
    j = {{"statistic", result.statistic}, {"w_plus", result.w_plus},  {"p_two_sided", result.p_two_sided},
         {"n_used", result.n_used},       {"exact", result.exact},    {"degenerate", result.degenerate}};
}

std::string format_gap_cell(double mean_delta, double fraction_significant, int precision) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(precision) << mean_delta << " (" << std::setprecision(2)
        << fraction_significant << ")";
    return out.str();
}

std::string markdown_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& cells) {
    std::string out = "|";
    for (const auto& h : header) {
        out += " " + h + " |";
    }
    out += "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) {
        out += i == 0 ? "---|" : "---:|";
    }
    out += "\n";
    for (const auto& row : cells) {
        out += "|";
        for (const auto& cell : row) {
            out += " " + cell + " |";
        }
        out += "\n";
    }
    return out;
}

} // namespace judgebench::stats
