#include "judgebench/metrics.hpp"

#include "judgebench/error.hpp"
#include "judgebench/io.hpp"
#include "judgebench/text.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

namespace judgebench::metrics {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using NgramCounts = std::unordered_map<std::string, int>;

NgramCounts ngrams(std::span<const std::string> tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) {
        return counts;
    }
    counts.reserve(tokens.size() - n + 1);
    std::string key;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        key.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j) {
                key.push_back('\x1f');
            }
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

std::size_t clipped_overlap(const NgramCounts& candidate, const NgramCounts& reference) {
    std::size_t overlap = 0;
    for (const auto& [gram, count] : candidate) {
        if (const auto it = reference.find(gram); it != reference.end()) {
            overlap += static_cast<std::size_t>(std::min(count, it->second));
        }
    }
    return overlap;
}

double f1(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

std::vector<std::string> require_tokens(std::string_view s, const char* what) {
    auto tokens = text::tokenize(s);
    if (tokens.empty()) {
        throw PreconditionError(std::string(what) + ": empty input");
    }
    return tokens;
}

TagCounts count_tags(const llm::PosTagging& tagging) {
    TagCounts counts;
    for (const auto& tag : tagging.tags) {
        counts[tag] += 1.0;
    }
    return counts;
}

void add_counts(TagCounts& into, const TagCounts& from) {
    for (const auto& [tag, count] : from) {
        into[tag] += count;
    }
}

double nan_mean(const std::vector<double>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : kNaN;
}

std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    std::ostringstream out;
    out << std::setprecision(10) << v;
    return out.str();
}

double parse_number(const std::string& field) {
    if (field == "nan" || field.empty()) {
        return kNaN;
    }
    try {
        return std::stod(field);
    } catch (const std::exception&) {
        throw DataError("scores csv: not a number: " + field);
    }
}

} // namespace

std::string_view task_name(Task task) noexcept { return task == Task::qa ? "qa" : "next_token"; }

Task parse_task(std::string_view name) {
    if (name == "qa") {
        return Task::qa;
    }
    if (name == "next_token") {
        return Task::next_token;
    }
    throw DataError("unknown task " + std::string(name) + " (expected qa or next_token)");
}

double bleu_tokens(std::span<const std::string> candidate, std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty()) {
        throw PreconditionError("bleu: empty input");
    }
    const std::size_t max_n = std::min<std::size_t>(4, candidate.size());
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cand = ngrams(candidate, n);
        const auto ref = ngrams(reference, n);
        const double total = static_cast<double>(candidate.size() - n + 1);
        const double matched = static_cast<double>(clipped_overlap(cand, ref));
        log_sum += std::log(matched > 0.0 ? matched / total : kBleuEpsilon);
    }
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
    return 100.0 * brevity * std::exp(log_sum / static_cast<double>(max_n));
}

double bleu(std::string_view candidate, std::string_view reference) {
    const auto c = require_tokens(candidate, "bleu");
    const auto r = require_tokens(reference, "bleu");
    return bleu_tokens(c, r);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

double rouge_tokens(std::span<const std::string> candidate, std::span<const std::string> reference,
                    RougeVariant variant) {
    if (candidate.empty() || reference.empty()) {
        throw PreconditionError("rouge: empty input");
    }
    if (variant == RougeVariant::rL) {
        const double lcs = static_cast<double>(lcs_length(candidate, reference));
        return f1(lcs / static_cast<double>(candidate.size()), lcs / static_cast<double>(reference.size()));
    }
    const std::size_t n = variant == RougeVariant::r1 ? 1 : 2;
    const auto cand = ngrams(candidate, n);
    const auto ref = ngrams(reference, n);
    if (cand.empty() || ref.empty()) {
        const bool identical = std::equal(candidate.begin(), candidate.end(), reference.begin(), reference.end());
        return cand.empty() && ref.empty() && identical ? 1.0 : 0.0;
    }
    const double overlap = static_cast<double>(clipped_overlap(cand, ref));
    const double cand_total = static_cast<double>(candidate.size() - n + 1);
    const double ref_total = static_cast<double>(reference.size() - n + 1);
    return f1(overlap / cand_total, overlap / ref_total);
}

double rouge(std::string_view candidate, std::string_view reference, RougeVariant variant) {
    const auto c = require_tokens(candidate, "rouge");
    const auto r = require_tokens(reference, "rouge");
    return rouge_tokens(c, r, variant);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw PreconditionError("cosine: dimension mismatch");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) {
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

EmbedScore embed_f(const llm::TokenEmbeddings& candidate, const llm::TokenEmbeddings& reference) {
    if (candidate.vectors.empty() || reference.vectors.empty()) {
        throw PreconditionError("embed_f: both sides need token vectors");
    }
    const std::size_t nc = candidate.vectors.size();
    const std::size_t nr = reference.vectors.size();
    std::vector<double> best_for_candidate(nc, -1.0);
    std::vector<double> best_for_reference(nr, -1.0);
    for (std::size_t i = 0; i < nc; ++i) {
        for (std::size_t j = 0; j < nr; ++j) {
            const double sim = cosine(candidate.vectors[i], reference.vectors[j]);
            best_for_candidate[i] = std::max(best_for_candidate[i], sim);
            best_for_reference[j] = std::max(best_for_reference[j], sim);
        }
    }
    EmbedScore score;
    for (double v : best_for_candidate) {
        score.precision += v / static_cast<double>(nc);
    }
    for (double v : best_for_reference) {
        score.recall += v / static_cast<double>(nr);
    }
    score.f = score.precision > 0.0 && score.recall > 0.0 ? f1(score.precision, score.recall)
                                                          : std::min(score.precision, score.recall);
    return score;
}

EmbedScore embed_f_whole_text(std::span<const double> candidate, std::span<const double> reference) {
    const double c = cosine(candidate, reference);
    return {c, c, c, true};
}

double jsd(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw PreconditionError("jsd: distributions differ in support size");
    }
    double sp = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) {
            throw PreconditionError("jsd: negative mass");
        }
        sp += p[i];
        sq += q[i];
    }
    if (sp <= 0.0 || sq <= 0.0) {
        throw PreconditionError("jsd: both distributions need positive mass");
    }
    double kl_pm = 0.0;
    double kl_qm = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p[i] / sp;
        const double qi = q[i] / sq;
        const double mi = 0.5 * (pi + qi);
        if (pi > 0.0) {
            kl_pm += pi * std::log2(pi / mi);
        }
        if (qi > 0.0) {
            kl_qm += qi * std::log2(qi / mi);
        }
    }
    return std::clamp(0.5 * kl_pm + 0.5 * kl_qm, 0.0, 1.0);
}

double jsd(const TagCounts& p, const TagCounts& q) {
    TagCounts support = p;
    for (const auto& [tag, _] : q) {
        support.emplace(tag, 0.0);
    }
    std::vector<double> pv;
    std::vector<double> qv;
    for (const auto& [tag, _] : support) {
        const auto pi = p.find(tag);
        const auto qi = q.find(tag);
        pv.push_back(pi == p.end() ? 0.0 : pi->second);
        qv.push_back(qi == q.end() ? 0.0 : qi->second);
    }
    return jsd(pv, qv);
}

double pos_jsd(const std::vector<std::string>& candidate_texts, const std::vector<std::string>& reference_texts,
               const Tagger& tagger, std::vector<std::string>* warnings) {
    if (candidate_texts.empty() || reference_texts.empty()) {
        throw PreconditionError("pos_jsd: both text lists must be non-empty");
    }
    auto pool = [&](const std::vector<std::string>& texts, const char* side) {
        TagCounts counts;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            try {
                add_counts(counts, count_tags(tagger(texts[i])));
            } catch (const std::exception& e) {
                if (warnings) {
                    warnings->push_back(std::string(side) + " text " + std::to_string(i) + " skipped: " + e.what());
                }
            }
        }
        if (counts.empty()) {
            throw DataError(std::string("pos_jsd: no ") + side + " text could be tagged");
        }
        return counts;
    };
    const TagCounts p = pool(candidate_texts, "candidate");
    const TagCounts q = pool(reference_texts, "reference");
    return jsd(p, q);
}

Providers Providers::from_gateway(llm::Gateway& gateway) {
    Providers providers;
    providers.token_embedder = [&gateway](std::string_view s) { return gateway.embed_tokens(s); };
    providers.text_embedder = [&gateway](std::string_view s) { return gateway.embed_text(s); };
    providers.tagger = [&gateway](std::string_view s) { return gateway.pos_tag(s); };
    return providers;
}

namespace {

struct ScoredRecord {
    std::optional<RecordScore> score;
    TagCounts candidate_tags;
    TagCounts reference_tags;
    std::string error;
};

ScoredRecord score_one(const GenerationRecord& record, const Providers& providers) {
    ScoredRecord out;
    const std::string candidate = text::normalize(record.candidate);
    const std::string reference = text::normalize(record.reference);
    const auto cand_tokens = text::tokenize(candidate);
    const auto ref_tokens = text::tokenize(reference);
    if (cand_tokens.empty() || ref_tokens.empty()) {
        out.error = record.item_id + ": empty " + (cand_tokens.empty() ? "candidate" : "reference");
        return out;
    }
    RecordScore score;
    score.item_id = record.item_id;
    score.judge_id = record.judge_id;
    score.model_tag = record.model_tag;
    score.task = record.task;
    score.metrics.bleu = bleu_tokens(cand_tokens, ref_tokens);
    score.metrics.rouge1 = rouge_tokens(cand_tokens, ref_tokens, RougeVariant::r1);
    score.metrics.rouge2 = rouge_tokens(cand_tokens, ref_tokens, RougeVariant::r2);
    score.metrics.rougeL = rouge_tokens(cand_tokens, ref_tokens, RougeVariant::rL);

    try {
        if (providers.token_embedder) {
            try {
                score.embed = embed_f(providers.token_embedder(candidate), providers.token_embedder(reference));
            } catch (const CapabilityError&) {
                if (!providers.text_embedder) {
                    throw;
                }
                score.embed = embed_f_whole_text(providers.text_embedder(candidate),
                                                 providers.text_embedder(reference));
            }
        } else if (providers.text_embedder) {
            score.embed = embed_f_whole_text(providers.text_embedder(candidate), providers.text_embedder(reference));
        } else {
            score.embed = {kNaN, kNaN, kNaN, true};
        }
    } catch (const ProviderError&) {
        score.embed = {kNaN, kNaN, kNaN, true};
    }
    score.metrics.embed_f = score.embed.f;

    score.metrics.pos_jsd = kNaN;
    if (providers.tagger) {
        try {
            out.candidate_tags = count_tags(providers.tagger(candidate));
            out.reference_tags = count_tags(providers.tagger(reference));
            if (!out.candidate_tags.empty() && !out.reference_tags.empty()) {
                score.metrics.pos_jsd = jsd(out.candidate_tags, out.reference_tags);
            }
        } catch (const std::exception& e) {
            out.candidate_tags.clear();
            out.reference_tags.clear();
            out.error = record.item_id + ": tagger: " + e.what();
        }
    }
    out.score = std::move(score);
    return out;
}

} // namespace

ScoreTable score_records(const std::vector<GenerationRecord>& records, const Providers& providers,
                         ScoreOptions options) {
    std::vector<ScoredRecord> scored(records.size());
    const std::size_t threads = std::min<std::size_t>(std::max<std::size_t>(1, options.threads), records.size());
    auto work = [&](std::size_t i) {
        try {
            scored[i] = score_one(records[i], providers);
        } catch (const std::exception& e) {
            scored[i].score.reset();
            scored[i].error = records[i].item_id + ": " + e.what();
        }
    };
    if (threads <= 1) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            work(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < records.size(); i = next++) {
                    work(i);
                }
            });
        }
    }

    ScoreTable table;
    struct Group {
        std::vector<MetricVector> rows;
        std::size_t degraded = 0;
        TagCounts candidate_tags;
        TagCounts reference_tags;
    };
    std::map<std::tuple<Task, std::string, std::string>, Group> groups;
    for (auto& item : scored) {
        if (!item.error.empty()) {
            table.errors.push_back(item.error);
        }
        if (!item.score) {
            continue;
        }
        auto& group = groups[{item.score->task, item.score->judge_id, item.score->model_tag}];
        group.rows.push_back(item.score->metrics);
        group.degraded += item.score->embed.degraded ? 1 : 0;
        add_counts(group.candidate_tags, item.candidate_tags);
        add_counts(group.reference_tags, item.reference_tags);
        table.records.push_back(std::move(*item.score));
    }
    for (auto& [key, group] : groups) {
        AggregateRow row;
        row.task = std::get<0>(key);
        row.judge_id = std::get<1>(key);
        row.model_tag = std::get<2>(key);
        row.count = group.rows.size();
        row.embed_degraded = group.degraded;
        auto column = [&](double MetricVector::*field) {
            std::vector<double> values;
            values.reserve(group.rows.size());
            for (const auto& m : group.rows) {
                values.push_back(m.*field);
            }
            return nan_mean(values);
        };
        row.mean.bleu = column(&MetricVector::bleu);
        row.mean.rouge1 = column(&MetricVector::rouge1);
        row.mean.rouge2 = column(&MetricVector::rouge2);
        row.mean.rougeL = column(&MetricVector::rougeL);
        row.mean.embed_f = column(&MetricVector::embed_f);
        row.mean.pos_jsd = group.candidate_tags.empty() || group.reference_tags.empty()
                               ? kNaN
                               : jsd(group.candidate_tags, group.reference_tags);
        table.aggregates.push_back(std::move(row));
    }
    return table;
}

std::vector<GenerationRecord> load_records(const std::filesystem::path& path) {
    std::vector<GenerationRecord> records;
    io::for_each_jsonl(path, [&](std::size_t line, const json& obj) {
        GenerationRecord record;
        record.judge_id = io::require_string(obj, "judge_id", line);
        record.item_id = io::require_string(obj, "item_id", line);
        record.reference = io::require_string(obj, "reference", line);
        record.candidate = io::require_string(obj, "candidate", line);
        record.model_tag = io::require_string(obj, "model_tag", line);
        record.prompt = obj.value("prompt", "");
        try {
            record.task = parse_task(obj.value("task", "qa"));
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line) + ": " + e.what());
        }
        records.push_back(std::move(record));
    });
    return records;
}

std::string scores_to_csv(const ScoreTable& table) {
    std::string out = std::string(kScoresCsvHeader) + "\n";
    for (const auto& r : table.records) {
        out += io::csv_escape(r.item_id) + "," + io::csv_escape(r.judge_id) + "," + io::csv_escape(r.model_tag) + "," +
               std::string(task_name(r.task)) + "," + format_number(r.metrics.bleu) + "," +
               format_number(r.metrics.rouge1) + "," + format_number(r.metrics.rouge2) + "," +
               format_number(r.metrics.rougeL) + "," + format_number(r.embed.precision) + "," +
               format_number(r.embed.recall) + "," + format_number(r.embed.f) + "," +
               (r.embed.degraded ? "1" : "0") + "," + format_number(r.metrics.pos_jsd) + "\n";
    }
    return out;
}

std::vector<RecordScore> parse_scores_csv(std::string_view csv) {
    const auto rows = io::parse_csv(csv);
    if (rows.empty()) {
        throw DataError("scores csv: empty file");
    }
    const auto& header = rows.front();
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) {
        column[header[i]] = i;
    }
    for (const char* required : {"item_id", "judge_id", "model_tag", "bleu", "rouge1", "rouge2", "rougeL", "embed_f",
                                 "pos_jsd"}) {
        if (!column.contains(required)) {
            throw DataError(std::string("scores csv: missing column ") + required);
        }
    }
    auto get = [&](const std::vector<std::string>& row, const char* name) -> std::string {
        const auto it = column.find(name);
        return it == column.end() || it->second >= row.size() ? std::string() : row[it->second];
    };
    std::vector<RecordScore> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != header.size()) {
            throw DataError("scores csv: row " + std::to_string(i + 1) + " has " + std::to_string(row.size()) +
                            " fields, expected " + std::to_string(header.size()));
        }
        RecordScore r;
        r.item_id = get(row, "item_id");
        r.judge_id = get(row, "judge_id");
        r.model_tag = get(row, "model_tag");
        const std::string task = get(row, "task");
        r.task = task.empty() ? Task::qa : parse_task(task);
        r.metrics.bleu = parse_number(get(row, "bleu"));
        r.metrics.rouge1 = parse_number(get(row, "rouge1"));
        r.metrics.rouge2 = parse_number(get(row, "rouge2"));
        r.metrics.rougeL = parse_number(get(row, "rougeL"));
        r.metrics.embed_f = parse_number(get(row, "embed_f"));
        r.metrics.pos_jsd = parse_number(get(row, "pos_jsd"));
        r.embed.precision = parse_number(get(row, "embed_p"));
        r.embed.recall = parse_number(get(row, "embed_r"));
        r.embed.f = r.metrics.embed_f;
        r.embed.degraded = get(row, "embed_degraded") == "1";
        out.push_back(std::move(r));
    }
    return out;
}

json aggregates_to_json(const ScoreTable& table) {
    auto number = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json rows = json::array();
    for (const auto& row : table.aggregates) {
        rows.push_back({{"task", task_name(row.task)},
                        {"judge_id", row.judge_id},
                        {"model_tag", row.model_tag},
                        {"count", row.count},
                        {"embed_degraded", row.embed_degraded},
                        {"bleu", number(row.mean.bleu)},
                        {"rouge1", number(row.mean.rouge1)},
                        {"rouge2", number(row.mean.rouge2)},
                        {"rougeL", number(row.mean.rougeL)},
                        {"embed_f", number(row.mean.embed_f)},
                        {"pos_jsd", number(row.mean.pos_jsd)}});
    }
    return {{"aggregates", rows}, {"errors", table.errors}};
}

double metric_value(const MetricVector& m, std::string_view name) {
    if (name == "bleu") {
        return m.bleu;
    }
    if (name == "rouge1") {
        return m.rouge1;
    }
    if (name == "rouge2") {
        return m.rouge2;
    }
    if (name == "rougeL") {
        return m.rougeL;
    }
    if (name == "embed_f") {
        return m.embed_f;
    }
    if (name == "pos_jsd") {
        return m.pos_jsd;
    }
    throw PreconditionError("unknown metric " + std::string(name));
}

bool higher_is_better(std::string_view metric_name) { return metric_name != "pos_jsd"; }

} // namespace judgebench::metrics
