// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

#include "cli/config.hpp"
#include "judgebench/corpus.hpp"
#include "judgebench/discernment.hpp"
#include "judgebench/error.hpp"
#include "judgebench/llm_gateway.hpp"
#include "judgebench/metrics.hpp"
#include "judgebench/qa_pipeline.hpp"
#include "judgebench/retrieval.hpp"
#include "judgebench/rng.hpp"
#include "judgebench/stats.hpp"

#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

using namespace judgebench;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool condition, const std::string& what) {
        if (!condition && ok) {
            ok = false;
            detail.str("");
            detail << what << "; ";
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---- 1: metric oracles -------------------------------------------------

std::vector<std::string> chars(const std::string& s) {
    std::vector<std::string> out;
    for (char c : s) {
        out.emplace_back(1, c);
    }
    return out;
}

std::size_t lcs_by_enumeration(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t best = 0;
    for (std::uint32_t mask = 1; mask < (1u << a.size()); ++mask) {
        const auto len = static_cast<std::size_t>(__builtin_popcount(mask));
        if (len <= best) {
            continue;
        }
        std::size_t j = 0;
        bool ok = true;
        for (std::size_t i = 0; i < a.size() && ok; ++i) {
            if (!(mask >> i & 1u)) {
                continue;
            }
            while (j < b.size() && b[j] != a[i]) {
                ++j;
            }
            ok = j < b.size();
            ++j;
        }
        if (ok) {
            best = len;
        }
    }
    return best;
}

std::vector<std::string> all_strings(std::size_t max_len) {
    std::vector<std::string> out;
    std::vector<std::string> frontier{""};
    for (std::size_t len = 1; len <= max_len; ++len) {
        std::vector<std::string> next;
        for (const auto& s : frontier) {
            for (char c : {'a', 'b', 'c'}) {
                next.push_back(s + c);
            }
        }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

void metric_oracles(Check& c) {
    const auto start = Clock::now();
    const auto strings = all_strings(7);
    std::vector<std::vector<std::string>> tokens;
    for (const auto& s : strings) {
        tokens.push_back(chars(s));
    }
    std::size_t pairs = 0;
    for (const auto& a : tokens) {
        for (const auto& b : tokens) {
            if (a.size() + b.size() > 8) {
                continue;
            }
            ++pairs;
            const auto lcs = lcs_by_enumeration(a, b);
            const double f = lcs == 0 ? 0.0 : 2.0 * static_cast<double>(lcs) / static_cast<double>(a.size() + b.size());
            if (metrics::lcs_length(a, b) != lcs ||
                !close(metrics::rouge_tokens(a, b, metrics::RougeVariant::rL), f, 1e-12)) {
                c.expect(false, "ROUGE-L disagrees with enumeration");
            }
        }
    }
    const double elapsed = seconds_since(start);
    c.expect(elapsed < 10.0, "ROUGE-L sweep too slow");

    const double b = metrics::bleu("a b c d", "a b c d e");
    c.expect(close(b, 77.88, 0.01), "BLEU hand case");
    const std::vector<double> p{1, 0};
    const std::vector<double> q{0.5, 0.5};
    const double j = metrics::jsd(p, q);
    c.expect(close(j, 0.3113, 0.0005), "JSD hand case");
    const llm::TokenEmbeddings cand{{"x"}, {{1, 0}}};
    const llm::TokenEmbeddings ref{{"x", "y"}, {{1, 0}, {0, 1}}};
    const double f = metrics::embed_f(cand, ref).f;
    c.expect(close(f, 0.6667, 0.0001), "embed_f hand case");
    c.detail << "rougeL pairs=" << pairs << " in " << elapsed << "s, bleu=" << b << ", jsd=" << j << ", embed_f=" << f;
}

// ---- 2: centered gaps --------------------------------------------------

void centered_gaps(Check& c) {
    const stats::ScoreMatrix planted{
        {"a", "b", "c"}, {{0.9, 0.2, 0.1}, {0.3, 0.8, 0.2}, {0.1, 0.3, 0.7}}, "rougeL", true};
    const auto d = stats::centered_gaps(planted);
    c.expect(close(d[0], 0.7, 1e-12) && close(d[1], 0.55, 1e-12) && close(d[2], 0.55, 1e-12), "planted matrix");

    const stats::ScoreMatrix constant{{"a", "b", "c"}, {{2, 2, 2}, {2, 2, 2}, {2, 2, 2}}, "bleu", true};
    for (double x : stats::centered_gaps(constant)) {
        c.expect(x == 0.0, "constant matrix");
    }

    Rng rng(derive_seed(2024, "shift"));
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(9);
        stats::ScoreMatrix m;
        m.values.assign(n, std::vector<double>(n));
        for (std::size_t k = 0; k < n; ++k) {
            m.judges.push_back(std::to_string(k));
            for (auto& v : m.values[k]) {
                v = rng.uniform01() * 100;
            }
        }
        auto shifted = m;
        for (std::size_t col = 0; col < n; ++col) {
            const double shift = (rng.uniform01() - 0.5) * 200;
            for (std::size_t k = 0; k < n; ++k) {
                shifted.values[k][col] += shift;
            }
        }
        const auto a = stats::centered_gaps(m);
        const auto b = stats::centered_gaps(shifted);
        for (std::size_t col = 0; col < n; ++col) {
            c.expect(close(a[col], b[col], 1e-9), "column shift changed a gap");
        }
    }
    c.detail << "deltas=(" << d[0] << ", " << d[1] << ", " << d[2] << "), 1000 shifted matrices";
}

// ---- 3: Wilcoxon -------------------------------------------------------

void wilcoxon(Check& c) {
    const std::vector<double> d{1, 2, 3};
    const auto r = stats::wilcoxon_signed_rank(d);
    c.expect(r.exact && close(r.p_two_sided, 0.25, 1e-12), "deltas (1,2,3)");
    Rng rng(derive_seed(2024, "wilcoxon"));
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(12);
        const double shift = rng.uniform01();
        for (auto& v : x) {
            v = rng.normal() + shift;
        }
        const auto exact = stats::wilcoxon_signed_rank(x);
        const auto normal = stats::wilcoxon_signed_rank_normal(x);
        c.expect(exact.exact && !normal.exact, "wrong method chosen at n = 12");
        worst = std::max(worst, std::abs(exact.p_two_sided - normal.p_two_sided));
    }
    c.expect(worst <= 0.02, "exact and normal p differ by more than 0.02");
    c.detail << "p(1,2,3)=" << r.p_two_sided << ", max |exact-normal| at n=12: " << worst;
}

// ---- 4: bootstrap calibration ------------------------------------------

void bootstrap(Check& c) {
    const auto start = Clock::now();
    constexpr int kTrials = 500;
    constexpr int kItems = 100;
    int rejected = 0;
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(derive_seed(derive_seed(2024, "null"), static_cast<std::uint64_t>(t)));
        std::vector<double> a(kItems);
        std::vector<double> b(kItems);
        for (int i = 0; i < kItems; ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal();
        }
        const auto r = stats::paired_bootstrap(a, b, stats::kDefaultResamples, derive_seed(7, static_cast<std::uint64_t>(t)));
        rejected += r.p < stats::kDefaultAlpha ? 1 : 0;
    }
    const double rate = static_cast<double>(rejected) / kTrials;
    c.expect(rate >= 0.03 && rate <= 0.07, "null rejection rate outside 0.05 +- 0.02");

    constexpr std::size_t kJudges = 5;
    stats::ScoreMatrix m;
    stats::PerItemScores items(kJudges, std::vector<std::vector<double>>(kJudges));
    m.values.assign(kJudges, std::vector<double>(kJudges));
    Rng rng(derive_seed(2024, "planted"));
    for (std::size_t k = 0; k < kJudges; ++k) {
        m.judges.push_back("judge" + std::to_string(k));
        for (std::size_t j = 0; j < kJudges; ++j) {
            double sum = 0.0;
            for (int i = 0; i < 20; ++i) {
                const double v = 0.3 + (k == j ? 0.5 : 0.0) + 0.05 * rng.normal();
                items[k][j].push_back(v);
                sum += v;
            }
            m.values[k][j] = sum / 20.0;
        }
    }
    const auto gap = stats::specificity_report(m, items, stats::kDefaultResamples, 11);
    c.expect(gap.fraction_significant == 1.0, "planted advantage missed for some judge");
    const double elapsed = seconds_since(start);
    c.expect(elapsed < 120.0, "calibration slower than 2 minutes");
    c.detail << "null rejection " << rate << " over " << kTrials << " trials of " << kItems
             << " items; planted detected " << gap.fraction_significant * 100 << "%; " << elapsed << "s";
}

// ---- 5: AC1 ------------------------------------------------------------

void ac1(Check& c) {
    const double v = stats::gwet_ac1({40, 40, 10, 10});
    c.expect(close(v, 0.6, 1e-12), "(40,40,10,10)");
    c.expect(close(stats::gwet_ac1({25, 75, 0, 0}), 1.0, 1e-12), "perfect agreement");
    Rng rng(derive_seed(2024, "ac1"));
    double lo = 1.0;
    double hi = -1.0;
    for (int t = 0; t < 1000; ++t) {
        stats::AgreementTable table{rng.uniform_index(50), rng.uniform_index(50), rng.uniform_index(50),
                                    rng.uniform_index(50)};
        if (table.total() == 0) {
            table.both_yes = 1;
        }
        const double x = stats::gwet_ac1(table);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    c.expect(lo >= -1.0 && hi <= 1.0, "AC1 outside [-1, 1]");
    c.detail << "AC1=" << v << ", random range [" << lo << ", " << hi << "]";
}

// ---- 6: pipeline -------------------------------------------------------

void pipeline(Check& c) {
    jbtest::TempDir cache("accept-cache");
    const auto docs =
        corpus::filter_judges(corpus::load_corpus(jbtest::data_dir() / "cli" / "corpus_small.jsonl"), 2).kept;
    const auto script = nlohmann::json::parse(jbtest::read_text(jbtest::data_dir() / "cli" / "mock_generate.json"));
    llm::GatewayConfig gc;
    gc.cache_dir = cache.path();
    gc.retry.max_retries = 0;

    auto mock = std::make_shared<llm::MockTransport>(script);
    llm::Gateway cold(mock, gc);
    qa::QaPipeline first(cold);
    const auto a = first.run(docs);
    const auto& t = a.report.totals;
    c.expect(t.extracted >= t.reasoning_valid && t.reasoning_valid >= t.questions_generated &&
                 t.questions_generated >= t.pairs_valid,
             "stage counts not monotone");
    c.expect(t.pairs_valid + t.discarded == t.questions_generated, "questions neither paired nor discarded");
    c.expect(t.discarded == 1, "the twice-rejected pair was not discarded");
    for (const auto& p : a.pairs) {
        c.expect(p.answer.find("אין מקום להקל") == std::string::npos, "twice-rejected pair kept");
    }

    // one sentence whose pair is always rejected: exactly two validations, then discard
    const nlohmann::json reject_all = {
        {"chat",
         {{{"system_contains", "אנליסט משפטי"}, {"responses", {R"(["נימוק יחיד."])"}}},
          {{"system_contains", "השב **כן**"}, {"responses", {"כן"}}},
          {{"system_contains", "seasoned Israeli jurist"}, {"responses", {"1. שאלה?"}}},
          {{"system_contains", "בודק-איכות"}, {"responses", {"0"}}}}}};
    auto strict = std::make_shared<llm::MockTransport>(reject_all);
    llm::GatewayConfig no_cache;
    llm::Gateway g(strict, no_cache);
    qa::QaPipeline p(g);
    const auto r = p.run({{"j", "c", "רקע. נימוק יחיד.", {}}});
    c.expect(r.pairs.empty() && r.report.totals.discarded == 1, "double rejection did not discard");
    c.expect(strict->calls() == 6, "expected 1+1+2+2 chat calls for a double rejection");

    auto silent = std::make_shared<llm::MockTransport>(nlohmann::json::object());
    llm::Gateway warm(silent, gc);
    qa::QaPipeline second(warm);
    const auto b = second.run(docs);
    c.expect(silent->calls() == 0 && warm.network_attempts() == 0, "warm rerun touched the network");
    c.expect(qa::pairs_to_jsonl(a.pairs) == qa::pairs_to_jsonl(b.pairs), "warm rerun output differs");
    c.detail << "counts " << t.extracted << " >= " << t.reasoning_valid << " >= " << t.questions_generated
             << " >= " << t.pairs_valid << ", discarded " << t.discarded << ", warm network calls "
             << warm.network_attempts() << ", cache hits " << warm.cache_hits();
}

// ---- 7: discernment ----------------------------------------------------

std::vector<discern::LabeledSentence> synthetic(const std::vector<std::string>& vocab, std::size_t n, bool positive,
                                                const std::string& prefix, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<discern::LabeledSentence> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        const auto words = 6 + rng.uniform_index(8);
        for (std::size_t w = 0; w < words; ++w) {
            text += (w ? " " : "") + vocab[rng.uniform_index(vocab.size())];
        }
        out.push_back({prefix + std::to_string(i), text, positive, discern::Source::real_judge, ""});
    }
    return out;
}

void discernment(Check& c) {
    const std::vector<std::string> latin{"court", "held", "appeal", "damages", "contract", "breach",
                                         "notice", "tenant", "evidence", "witness"};
    const std::vector<std::string> hebrew{"בית", "משפט", "ערעור", "פיצוי", "חוזה",
                                          "הפרה", "הודעה", "שוכר", "ראיה", "עד"};
    discern::RunOptions options;
    options.seed = 2024;

    constexpr int kJudges = 5;
    double planted_min = 1.0;
    double null_sum = 0.0;
    for (int j = 0; j < kJudges; ++j) {
        const auto seed = derive_seed(2024, static_cast<std::uint64_t>(j));
        const auto own = synthetic(latin, 300, true, "p", derive_seed(seed, "own"));
        const auto other = synthetic(hebrew, 300, false, "o", derive_seed(seed, "other"));
        const auto twin = synthetic(latin, 1000, false, "t", derive_seed(seed, "twin"));
        const auto own_big = synthetic(latin, 1000, true, "p", derive_seed(seed, "own-big"));
        const auto judge = "judge" + std::to_string(j);
        planted_min = std::min(planted_min,
                               discern::run_settings(judge, own, {{"other", "baseline", other}}, options)[0].accuracy);
        null_sum += discern::run_settings(judge, own_big, {{"twin", "baseline", twin}}, options)[0].accuracy;
    }
    const double null_mean = null_sum / kJudges;
    c.expect(planted_min >= 0.95, "disjoint vocabularies not separated");
    c.expect(null_mean >= 0.45 && null_mean <= 0.55, "identically distributed classes not at chance");

    const auto pos = synthetic(latin, 200, true, "p", 1);
    const auto neg = synthetic(hebrew, 200, false, "n", 2);
    const auto perms = discern::permutation_accuracies(pos, neg, 20, options);
    const double perm_mean = std::accumulate(perms.begin(), perms.end(), 0.0) / static_cast<double>(perms.size());
    c.expect(perm_mean >= 0.45 && perm_mean <= 0.55, "permutation mean away from chance");
    c.detail << "planted min accuracy " << planted_min << ", null mean " << null_mean << " over " << kJudges
             << " judges, permutation mean " << perm_mean;
}

// ---- 8: retrieval ------------------------------------------------------

void retrieval_exact(Check& c) {
    Rng rng(derive_seed(2024, "retrieval"));
    double worst_self = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(2000);
        const std::size_t dim = 2 + rng.uniform_index(31);
        std::vector<retrieval::IndexEntry> entries;
        std::vector<std::vector<double>> raw;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> v(dim);
            for (auto& x : v) {
                x = rng.normal();
            }
            raw.push_back(v);
            std::string id = std::to_string(i);
            id.insert(0, 5 - id.size(), '0');
            entries.push_back({"p" + id, v});
        }
        const auto index = retrieval::build_index("j", entries);
        std::vector<double> q(dim);
        for (auto& x : q) {
            x = rng.normal();
        }
        const std::size_t k = 1 + rng.uniform_index(n);

        // brute force on the raw vectors
        auto norm = [](const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); };
        std::vector<std::pair<double, std::string>> scored;
        for (std::size_t i = 0; i < n; ++i) {
            const double cos = std::inner_product(q.begin(), q.end(), raw[i].begin(), 0.0) / (norm(q) * norm(raw[i]));
            scored.emplace_back(cos, entries[i].pair_id);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        const auto hits = retrieval::query(index, q, k);
        bool same = hits.size() == k;
        for (std::size_t i = 0; same && i < k; ++i) {
            same = hits[i].pair_id == scored[i].second && close(hits[i].score, scored[i].first, 1e-9);
        }
        c.expect(same, "query differs from brute force in trial " + std::to_string(trial));

        const std::size_t self = rng.uniform_index(n);
        const auto top = retrieval::query(index, raw[self], 1);
        worst_self = std::max(worst_self, std::abs(top[0].score - 1.0));
        c.expect(close(top[0].score, 1.0, 1e-12), "self query score is not 1");
    }
    c.detail << "1000 random indices match brute force; worst |self score - 1| " << worst_self;
}

// ---- 9: defaults -------------------------------------------------------

void defaults(Check& c) {
    const auto config = cli::resolve_config({});
    c.expect(config.min_docs == 100, "min_docs");
    c.expect(config.prefix_fraction == 0.15, "prefix fraction");
    c.expect(config.ablation_fractions == std::vector<double>{0.25, 0.5, 0.75, 1.0}, "ablation fractions");
    c.expect(config.rag_k == std::vector<std::size_t>{3, 5}, "rag k");
    c.expect(config.alpha == 0.05, "alpha");
    c.expect(config.models.extractor_temperature == 0.3, "extractor temperature");
    c.expect(config.models.validator_temperature == 0.1, "validator temperature");
    c.detail << "min_docs " << config.min_docs << ", prefix " << config.prefix_fraction << ", rag k {"
             << config.rag_k[0] << ", " << config.rag_k[1] << "}, alpha " << config.alpha << ", temperatures "
             << config.models.extractor_temperature << "/" << config.models.validator_temperature;
}

// ---- 10: throughput ----------------------------------------------------

void throughput(Check& c) {
    const std::vector<std::string> words{"בית", "המשפט", "קבע", "כי", "הערעור", "נדחה", "לאור", "הראיות", "12", ",",
                                         "סעיף", "החוק", "הנאשם", "עונש", "מאסר", "על", "תנאי", "."};
    Rng rng(derive_seed(2024, "throughput"));
    auto sentence = [&] {
        std::string s;
        const auto n = 15 + rng.uniform_index(25);
        for (std::size_t i = 0; i < n; ++i) {
            s += (i ? " " : "") + words[rng.uniform_index(words.size())];
        }
        return s;
    };
    std::vector<metrics::GenerationRecord> records;
    for (int i = 0; i < 10000; ++i) {
        records.push_back({"judge" + std::to_string(i % 10), metrics::Task::qa, std::to_string(i), "", sentence(),
                           sentence(), "model"});
    }
    auto mock = std::make_shared<llm::MockTransport>();
    llm::Gateway gateway(mock, {});
    metrics::Providers providers;
    providers.tagger = [&](std::string_view s) { return gateway.pos_tag(s); };
    const auto start = Clock::now();
    const auto table = metrics::score_records(records, providers, {4});
    const double elapsed = seconds_since(start);
    c.expect(table.records.size() == 10000 && table.errors.empty(), "some records failed");
    c.expect(table.aggregates.size() == 10 && std::isfinite(table.aggregates[0].mean.pos_jsd), "pooled JSD missing");
    c.expect(elapsed < 60.0, "scoring took longer than 60 s");
    c.detail << "10000 pairs in " << elapsed << "s";
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<void(Check&)>>> criteria{
        {"metric oracles", metric_oracles},
        {"centered gap", centered_gaps},
        {"wilcoxon", wilcoxon},
        {"bootstrap calibration", bootstrap},
        {"gwet ac1", ac1},
        {"pipeline conservation and retries", pipeline},
        {"discernment calibration", discernment},
        {"retrieval exactness", retrieval_exact},
        {"default parameters", defaults},
        {"throughput", throughput},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check c;
        try {
            criteria[i].second(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail.str("");
            c.detail << "exception: " << e.what();
        }
        std::printf("%s %zu %s: %s\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].first, c.detail.str().c_str());
        std::fflush(stdout);
        failures += c.ok ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
