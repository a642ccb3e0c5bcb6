#include "judgebench/discernment.hpp"

#include "judgebench/error.hpp"
#include "judgebench/rng.hpp"
#include "judgebench/text.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace judgebench::discern {

std::size_t FeatureSpec::dimension() const {
    if (kind == FeatureKind::embedding) {
        return embedding_dim;
    }
    return std::size_t{1} << hash_bits;
}

double SparseVector::dot(const SparseVector& other) const {
    double sum = 0.0;
    auto a = entries.begin();
    auto b = other.entries.begin();
    while (a != entries.end() && b != other.entries.end()) {
        if (a->first < b->first) {
            ++a;
        } else if (b->first < a->first) {
            ++b;
        } else {
            sum += a->second * b->second;
            ++a;
            ++b;
        }
    }
    return sum;
}

namespace {

void normalize_in_place(SparseVector& v) {
    double norm = 0.0;
    for (const auto& [_, x] : v.entries) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& [_, x] : v.entries) {
            x /= norm;
        }
    }
}

} // namespace

SparseVector featurize(std::string_view text, const FeatureSpec& spec) {
    if (text.empty()) {
        throw PreconditionError("featurize: empty text");
    }
    if (spec.kind != FeatureKind::char_ngram) {
        throw PreconditionError("featurize: spec is not a character n-gram spec");
    }
    if (spec.hash_bits < 1 || spec.hash_bits > 30 || spec.orders.empty()) {
        throw PreconditionError("featurize: invalid feature spec");
    }
    const std::u32string cps = text::code_points(text);
    const std::uint64_t mask = (std::uint64_t{1} << spec.hash_bits) - 1;
    std::map<std::uint32_t, double> counts;
    for (int order : spec.orders) {
        if (order < 1) {
            throw PreconditionError("featurize: n-gram order must be positive");
        }
        const auto n = static_cast<std::size_t>(order);
        for (std::size_t i = 0; i + n <= cps.size(); ++i) {
            const std::string gram = text::encode_utf8(std::u32string_view(cps).substr(i, n));
            counts[static_cast<std::uint32_t>(fnv1a64(gram) & mask)] += 1.0;
        }
    }
    SparseVector v;
    v.entries.assign(counts.begin(), counts.end());
    v.empty_input = v.entries.empty();
    normalize_in_place(v);
    return v;
}

SparseVector featurize_embedding(std::string_view text, const FeatureSpec& spec, const TextEmbedder& embedder) {
    if (text.empty()) {
        throw PreconditionError("featurize: empty text");
    }
    if (spec.kind != FeatureKind::embedding || !embedder) {
        throw PreconditionError("featurize_embedding: needs an embedding spec and an embedder");
    }
    const auto dense = embedder(text);
    if (dense.size() != spec.embedding_dim) {
        throw DataError("featurize_embedding: embedder returned " + std::to_string(dense.size()) +
                        " dimensions, spec says " + std::to_string(spec.embedding_dim));
    }
    SparseVector v;
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] != 0.0) {
            v.entries.emplace_back(static_cast<std::uint32_t>(i), dense[i]);
        }
    }
    v.empty_input = v.entries.empty();
    normalize_in_place(v);
    return v;
}

double AuthorshipModel::probability(const SparseVector& x) const {
    double z = bias;
    for (const auto& [i, value] : x.entries) {
        z += weights[i] * value;
    }
    return 1.0 / (1.0 + std::exp(-z));
}

namespace {

struct Example {
    const SparseVector* x;
    double y;
    double weight;
};

SparseVector features_for(const LabeledSentence& s, const FeatureSpec& spec, const Featurizer& featurizer) {
    if (s.text.empty()) {
        throw PreconditionError("discernment: sentence " + s.id + " has empty text");
    }
    return featurizer ? featurizer(s.text) : featurize(s.text, spec);
}

std::vector<SparseVector> featurize_all(const std::vector<LabeledSentence>& items, const FeatureSpec& spec,
                                        const Featurizer& featurizer) {
    std::vector<SparseVector> out;
    out.reserve(items.size());
    for (const auto& s : items) {
        out.push_back(features_for(s, spec, featurizer));
    }
    return out;
}

// Weights are held as scale * v so the L2 shrink is O(1) per epoch and
// each epoch only touches non-zero features.
AuthorshipModel fit(const std::vector<const SparseVector*>& pos, const std::vector<const SparseVector*>& neg,
                    const FeatureSpec& spec, const TrainOptions& options) {
    if (pos.size() < kMinPerClass || neg.size() < kMinPerClass) {
        throw PreconditionError("train: need at least " + std::to_string(kMinPerClass) +
                                " examples per class, got " + std::to_string(pos.size()) + " positive and " +
                                std::to_string(neg.size()) + " negative");
    }
    const std::size_t dim = spec.dimension();
    if (dim == 0) {
        throw PreconditionError("train: feature dimension is zero");
    }
    const double total = static_cast<double>(pos.size() + neg.size());
    std::vector<Example> examples;
    examples.reserve(pos.size() + neg.size());
    for (const auto* x : pos) {
        examples.push_back({x, 1.0, total / (2.0 * static_cast<double>(pos.size()))});
    }
    for (const auto* x : neg) {
        examples.push_back({x, 0.0, total / (2.0 * static_cast<double>(neg.size()))});
    }
    for (const auto& e : examples) {
        if (!e.x->entries.empty() && e.x->entries.back().first >= dim) {
            throw PreconditionError("train: feature index beyond spec dimension");
        }
    }

    std::vector<double> v(dim, 0.0);
    double scale = 1.0;
    double bias = 0.0;
    std::vector<double> residual(examples.size());
    const double shrink = 1.0 - options.learning_rate * options.l2;
    if (shrink <= 0.0) {
        throw PreconditionError("train: learning_rate * l2 must be below 1");
    }
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        double bias_grad = 0.0;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            double z = 0.0;
            for (const auto& [idx, value] : examples[i].x->entries) {
                z += v[idx] * value;
            }
            z = scale * z + bias;
            const double p = 1.0 / (1.0 + std::exp(-z));
            residual[i] = examples[i].weight * (p - examples[i].y) / total;
            bias_grad += residual[i];
        }
        scale *= shrink;
        const double step = options.learning_rate / scale;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            for (const auto& [idx, value] : examples[i].x->entries) {
                v[idx] -= step * residual[i] * value;
            }
        }
        bias -= options.learning_rate * bias_grad;
        if (scale < 1e-8) {
            for (double& w : v) {
                w *= scale;
            }
            scale = 1.0;
        }
    }
    AuthorshipModel model;
    model.spec = spec;
    model.options = options;
    model.bias = bias;
    for (double& w : v) {
        w *= scale;
    }
    model.weights = std::move(v);
    return model;
}

std::vector<std::string> sorted_ids(const std::vector<LabeledSentence>& a, const std::vector<LabeledSentence>& b) {
    std::vector<std::string> ids;
    ids.reserve(a.size() + b.size());
    for (const auto& s : a) {
        ids.push_back(s.id);
    }
    for (const auto& s : b) {
        ids.push_back(s.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw PreconditionError("train: duplicate sentence id " + *std::adjacent_find(ids.begin(), ids.end()));
    }
    return ids;
}

std::vector<const SparseVector*> pointers(const std::vector<SparseVector>& xs) {
    std::vector<const SparseVector*> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
        out.push_back(&x);
    }
    return out;
}

// Seeded draw of `n` items without replacement, kept in input order.
template <typename T>
std::vector<T> draw(const std::vector<T>& pool, std::size_t n, std::uint64_t seed) {
    if (n >= pool.size()) {
        return pool;
    }
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<T> out;
    out.reserve(n);
    for (std::size_t i : idx) {
        out.push_back(pool[i]);
    }
    return out;
}

struct Split {
    std::vector<LabeledSentence> train;
    std::vector<LabeledSentence> test;
};

Split split_class(std::vector<LabeledSentence> items, double test_fraction, std::uint64_t seed) {
    Rng rng(seed);
    rng.shuffle(items);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(items.size())));
    n_test = std::max<std::size_t>(n_test, 1);
    if (items.size() < n_test + kMinPerClass) {
        throw PreconditionError("run_settings: " + std::to_string(items.size()) +
                                " examples per class leave too few for training");
    }
    Split s;
    s.test.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.assign(items.begin() + static_cast<std::ptrdiff_t>(n_test), items.end());
    return s;
}

struct TrialResult {
    double accuracy;
    std::size_t train_size;
    std::size_t test_size;
};

TrialResult balanced_trial(const std::vector<LabeledSentence>& positives,
                           const std::vector<LabeledSentence>& negatives, const RunOptions& options,
                           const Featurizer& featurizer, std::uint64_t seed) {
    const std::size_t n = std::min(positives.size(), negatives.size());
    auto pos = draw(positives, n, derive_seed(seed, "balance/positive"));
    auto neg = draw(negatives, n, derive_seed(seed, "balance/negative"));
    for (auto& s : pos) {
        s.positive = true;
    }
    for (auto& s : neg) {
        s.positive = false;
    }
    auto pos_split = split_class(std::move(pos), options.test_fraction, derive_seed(seed, "split/positive"));
    auto neg_split = split_class(std::move(neg), options.test_fraction, derive_seed(seed, "split/negative"));
    TrainOptions train_options = options.train;
    train_options.seed = seed;
    const auto model = train(pos_split.train, neg_split.train, options.spec, train_options, featurizer);
    std::vector<LabeledSentence> held_out = std::move(pos_split.test);
    held_out.insert(held_out.end(), neg_split.test.begin(), neg_split.test.end());
    return {evaluate(model, held_out, featurizer), pos_split.train.size() + neg_split.train.size(), held_out.size()};
}

} // namespace

AuthorshipModel train(const std::vector<LabeledSentence>& positives, const std::vector<LabeledSentence>& negatives,
                      const FeatureSpec& spec, TrainOptions options, const Featurizer& featurizer) {
    auto ids = sorted_ids(positives, negatives);
    const auto pos_x = featurize_all(positives, spec, featurizer);
    const auto neg_x = featurize_all(negatives, spec, featurizer);
    auto model = fit(pointers(pos_x), pointers(neg_x), spec, options);
    model.training_ids = std::move(ids);
    return model;
}

double evaluate(const AuthorshipModel& model, const std::vector<LabeledSentence>& held_out,
                const Featurizer& featurizer) {
    if (held_out.empty()) {
        throw PreconditionError("evaluate: empty held-out set");
    }
    std::size_t correct = 0;
    for (const auto& s : held_out) {
        if (std::binary_search(model.training_ids.begin(), model.training_ids.end(), s.id)) {
            throw PreconditionError("evaluate: held-out sentence " + s.id + " was used for training");
        }
        const bool predicted = model.probability(features_for(s, model.spec, featurizer)) >= 0.5;
        correct += predicted == s.positive ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(held_out.size());
}

std::vector<SettingResult> run_settings(const std::string& judge_id, const std::vector<LabeledSentence>& real_sentences,
                                        const std::vector<SettingInput>& settings, const RunOptions& options,
                                        const Featurizer& featurizer) {
    if (settings.empty()) {
        throw PreconditionError("run_settings: no settings for judge " + judge_id);
    }
    std::vector<SettingResult> results;
    for (const auto& setting : settings) {
        if (setting.negatives.empty()) {
            throw PreconditionError("run_settings: setting " + setting.name + " has no negatives");
        }
        const auto seed = derive_seed(options.seed, judge_id + "/" + setting.name);
        const auto trial = balanced_trial(real_sentences, setting.negatives, options, featurizer, seed);
        results.push_back({setting.name, setting.group, trial.accuracy, trial.train_size, trial.test_size});
    }
    return results;
}

std::vector<double> permutation_accuracies(const std::vector<LabeledSentence>& positives,
                                           const std::vector<LabeledSentence>& negatives, std::size_t permutations,
                                           const RunOptions& options, const Featurizer& featurizer) {
    const std::size_t n = std::min(positives.size(), negatives.size());
    auto pool = draw(positives, n, derive_seed(options.seed, "perm/balance/positive"));
    const auto neg = draw(negatives, n, derive_seed(options.seed, "perm/balance/negative"));
    pool.insert(pool.end(), neg.begin(), neg.end());
    const auto features = featurize_all(pool, options.spec, featurizer);

    std::vector<double> accuracies;
    accuracies.reserve(permutations);
    for (std::size_t p = 0; p < permutations; ++p) {
        const auto seed = derive_seed(options.seed, static_cast<std::uint64_t>(p));
        std::vector<bool> labels(pool.size(), false);
        std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n), true);
        Rng rng(derive_seed(seed, "labels"));
        rng.shuffle(labels);

        std::vector<std::size_t> by_class[2];
        for (std::size_t i = 0; i < pool.size(); ++i) {
            by_class[labels[i] ? 1 : 0].push_back(i);
        }
        std::vector<const SparseVector*> train_x[2];
        std::vector<std::size_t> test;
        for (int c = 0; c < 2; ++c) {
            Rng split_rng(derive_seed(seed, c == 1 ? "split/positive" : "split/negative"));
            split_rng.shuffle(by_class[c]);
            auto n_test = static_cast<std::size_t>(
                std::llround(options.test_fraction * static_cast<double>(by_class[c].size())));
            n_test = std::max<std::size_t>(n_test, 1);
            if (by_class[c].size() < n_test + kMinPerClass) {
                throw PreconditionError("permutation_accuracies: too few examples per class");
            }
            test.insert(test.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(n_test));
            for (std::size_t k = n_test; k < by_class[c].size(); ++k) {
                train_x[c].push_back(&features[by_class[c][k]]);
            }
        }
        const auto model = fit(train_x[1], train_x[0], options.spec, options.train);
        std::size_t correct = 0;
        for (std::size_t i : test) {
            correct += (model.probability(features[i]) >= 0.5) == labels[i] ? 1 : 0;
        }
        accuracies.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
    }
    return accuracies;
}

std::vector<SummaryRow> summarize(const std::vector<SettingSummary>& settings, double alpha) {
    std::vector<SummaryRow> rows;
    for (const auto& s : settings) {
        if (s.accuracy_by_judge.empty()) {
            throw PreconditionError("summarize: setting " + s.name + " has no judges");
        }
        std::vector<double> deltas;
        double sum = 0.0;
        for (const auto& [_, acc] : s.accuracy_by_judge) {
            deltas.push_back(acc - 0.5);
            sum += acc;
        }
        SummaryRow row;
        row.name = s.name;
        row.group = s.group;
        row.mean_accuracy = sum / static_cast<double>(deltas.size());
        row.vs_chance = stats::wilcoxon_signed_rank(deltas);
        row.differs_from_chance = !row.vs_chance.degenerate && row.vs_chance.p_two_sided < alpha;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string summary_markdown(const std::vector<SummaryRow>& rows) {
    std::vector<std::string> groups;
    for (const auto& r : rows) {
        if (std::find(groups.begin(), groups.end(), r.group) == groups.end()) {
            groups.push_back(r.group);
        }
    }
    std::vector<std::vector<std::string>> cells;
    for (const auto& g : groups) {
        if (!g.empty()) {
            cells.push_back({"**" + g + "**", ""});
        }
        for (const auto& r : rows) {
            if (r.group != g) {
                continue;
            }
            std::ostringstream acc;
            acc << std::fixed << std::setprecision(1) << 100.0 * r.mean_accuracy << (r.differs_from_chance ? "*" : "");
            cells.push_back({r.name, acc.str()});
        }
    }
    return stats::markdown_table({"Setting", "Accuracy (%)"}, cells) +
           "\n\\* differs from chance (50%), two-sided signed-rank test across judges.\n";
}

void to_json(nlohmann::json& j, const SettingResult& r) {
    j = {{"setting", r.name},
         {"group", r.group},
         {"accuracy", r.accuracy},
         {"train_size", r.train_size},
         {"test_size", r.test_size}};
}

void to_json(nlohmann::json& j, const SummaryRow& r) {
    j = {{"setting", r.name},
         {"group", r.group},
         {"mean_accuracy", r.mean_accuracy},
         {"wilcoxon", r.vs_chance},
         {"differs_from_chance", r.differs_from_chance}};
}

void to_json(nlohmann::json& j, const FeatureSpec& spec) {
    j = {{"kind", spec.kind == FeatureKind::embedding ? "embedding" : "char_ngram"},
         {"orders", spec.orders},
         {"hash_bits", spec.hash_bits},
         {"embedding_dim", spec.embedding_dim}};
}

void from_json(const nlohmann::json& j, FeatureSpec& spec) {
    spec = FeatureSpec{};
    const auto kind = j.value("kind", std::string("char_ngram"));
    if (kind == "embedding") {
        spec.kind = FeatureKind::embedding;
    } else if (kind != "char_ngram") {
        throw UsageError("feature kind must be char_ngram or embedding, got " + kind);
    }
    spec.orders = j.value("orders", spec.orders);
    spec.hash_bits = j.value("hash_bits", spec.hash_bits);
    spec.embedding_dim = j.value("embedding_dim", spec.embedding_dim);
}

} // namespace judgebench::discern
