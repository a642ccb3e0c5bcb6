#include "judgebench/corpus.hpp"

#include "judgebench/error.hpp"
#include "judgebench/io.hpp"
#include "judgebench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace judgebench::corpus {

std::size_t fractional_count(double fraction, std::size_t n) {
    const double exact = fraction * static_cast<double>(n);
    const double nearest = std::round(exact);
    // Absorb representation error so that 0.7 * 10 counts as 7, not 8.
    const double value = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
    return std::max<std::size_t>(1, static_cast<std::size_t>(value));
}

std::vector<VerdictDoc> load_corpus(const std::filesystem::path& path, text::NormalizeOptions options) {
    std::vector<VerdictDoc> docs;
    std::set<std::pair<std::string, std::string>> seen;
    io::for_each_jsonl(path, [&](std::size_t line, const nlohmann::json& obj) {
        if (!obj.is_object()) {
            throw DataError("line " + std::to_string(line) + ": expected a JSON object");
        }
        VerdictDoc doc;
        doc.judge_id = io::require_string(obj, "judge_id", line);
        doc.case_id = io::require_string(obj, "case_id", line);
        doc.text = text::normalize(io::require_string(obj, "text", line), options);
        if (obj.contains("date") && !obj["date"].is_null()) {
            if (!obj["date"].is_string()) {
                throw DataError("line " + std::to_string(line) + ": field date must be a string");
            }
            doc.date = obj["date"].get<std::string>();
        }
        if (doc.text.empty()) {
            throw DataError("line " + std::to_string(line) + ": empty text after normalization");
        }
        if (!seen.emplace(doc.judge_id, doc.case_id).second) {
            throw DataError("line " + std::to_string(line) + ": duplicate case " + doc.case_id + " for judge " +
                            doc.judge_id);
        }
        docs.push_back(std::move(doc));
    });
    return docs;
}

std::vector<JudgeProfile> profile_judges(const std::vector<VerdictDoc>& docs) {
    std::map<std::string, JudgeProfile> by_judge;
    for (const auto& doc : docs) {
        auto& profile = by_judge[doc.judge_id];
        profile.judge_id = doc.judge_id;
        ++profile.doc_count;
        profile.token_count += text::tokenize(doc.text).size();
    }
    std::vector<JudgeProfile> out;
    out.reserve(by_judge.size());
    for (auto& [_, profile] : by_judge) {
        out.push_back(std::move(profile));
    }
    return out;
}

FilterResult filter_judges(const std::vector<VerdictDoc>& docs, std::size_t min_docs) {
    if (min_docs < 1) {
        throw PreconditionError("filter_judges: min_docs must be >= 1");
    }
    FilterResult result;
    result.profiles = profile_judges(docs);
    std::set<std::string> retained;
    for (const auto& profile : result.profiles) {
        if (profile.doc_count >= min_docs) {
            retained.insert(profile.judge_id);
        }
    }
    std::copy_if(docs.begin(), docs.end(), std::back_inserter(result.kept),
                 [&](const VerdictDoc& doc) { return retained.contains(doc.judge_id); });
    return result;
}

std::vector<DatasetSplit> split_per_judge(const std::vector<SplitItem>& items, double test_ratio, std::uint64_t seed) {
    if (!(test_ratio > 0.0 && test_ratio < 1.0)) {
        throw PreconditionError("split_per_judge: test_ratio must lie in (0, 1)");
    }
    std::map<std::string, std::vector<std::string>> by_judge;
    for (const auto& item : items) {
        by_judge[item.judge_id].push_back(item.item_id);
    }
    std::vector<DatasetSplit> splits;
    for (auto& [judge, ids] : by_judge) {
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw DataError("split_per_judge: duplicate item id for judge " + judge);
        }
        if (ids.size() < 2) {
            throw DataError("split_per_judge: judge " + judge + " has fewer than 2 items");
        }
        Rng rng(derive_seed(seed, judge));
        rng.shuffle(ids);
        const std::size_t n_test = std::min(fractional_count(test_ratio, ids.size()), ids.size() - 1);
        DatasetSplit split;
        split.judge_id = judge;
        split.seed = seed;
        split.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
        std::sort(split.test.begin(), split.test.end());
        std::sort(split.train.begin(), split.train.end());
        splits.push_back(std::move(split));
    }
    return splits;
}

DatasetSplit subsample_train(const DatasetSplit& split, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw PreconditionError("subsample_train: fraction must lie in (0, 1]");
    }
    DatasetSplit out = split;
    out.fraction = split.fraction * fraction;
    if (split.train.empty()) {
        return out;
    }
    // Shuffle a canonical order and take a prefix; prefixes of one
    // permutation nest, which gives the subset property across fractions.
    std::vector<std::string> order = split.train;
    std::sort(order.begin(), order.end());
    Rng rng(derive_seed(seed, "subsample/" + split.judge_id));
    rng.shuffle(order);
    order.resize(fractional_count(fraction, order.size()));
    std::sort(order.begin(), order.end());
    out.train = std::move(order);
    return out;
}

PrefixTask make_prefix_task(const VerdictDoc& doc, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw PreconditionError("make_prefix_task: fraction must lie in (0, 1)");
    }
    const auto spans = text::whitespace_spans(doc.text);
    if (spans.size() < 2) {
        throw PreconditionError("make_prefix_task: case " + doc.case_id + " has fewer than 2 tokens");
    }
    const std::size_t k = fractional_count(fraction, spans.size());
    if (k >= spans.size()) {
        throw PreconditionError("make_prefix_task: case " + doc.case_id + " leaves an empty continuation");
    }
    const std::size_t cut = spans[k - 1].end;
    PrefixTask task;
    task.case_id = doc.case_id;
    task.judge_id = doc.judge_id;
    task.prefix = doc.text.substr(0, cut);
    task.continuation_reference = doc.text.substr(cut);
    task.fraction = fraction;
    return task;
}

void to_json(nlohmann::json& j, const VerdictDoc& doc) {
    j = {{"judge_id", doc.judge_id}, {"case_id", doc.case_id}, {"text", doc.text}};
    if (doc.date) {
        j["date"] = *doc.date;
    }
}

void to_json(nlohmann::json& j, const JudgeProfile& profile) {
    j = {{"judge_id", profile.judge_id}, {"doc_count", profile.doc_count}, {"token_count", profile.token_count}};
}

void to_json(nlohmann::json& j, const DatasetSplit& split) {
    j = {{"judge_id", split.judge_id},
         {"seed", split.seed},
         {"fraction", split.fraction},
         {"train", split.train},
         {"test", split.test}};
}

void from_json(const nlohmann::json& j, DatasetSplit& split) {
    j.at("judge_id").get_to(split.judge_id);
    j.at("seed").get_to(split.seed);
    j.at("fraction").get_to(split.fraction);
    j.at("train").get_to(split.train);
    j.at("test").get_to(split.test);
}

void to_json(nlohmann::json& j, const PrefixTask& task) {
    j = {{"case_id", task.case_id},
         {"judge_id", task.judge_id},
         {"prefix", task.prefix},
         {"continuation_reference", task.continuation_reference},
         {"fraction", task.fraction}};
}

} // namespace judgebench::corpus
