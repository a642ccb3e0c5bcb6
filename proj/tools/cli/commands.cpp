#include "cli/commands.hpp"

#include "cli/config.hpp"

#include "judgebench/corpus.hpp"
#include "judgebench/discernment.hpp"
#include "judgebench/error.hpp"
#include "judgebench/io.hpp"
#include "judgebench/llm_gateway.hpp"
#include "judgebench/metrics.hpp"
#include "judgebench/prompts.hpp"
#include "judgebench/qa_pipeline.hpp"
#include "judgebench/rng.hpp"
#include "judgebench/retrieval.hpp"
#include "judgebench/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace judgebench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

std::string fraction_label(double f) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << f;
    return s.str();
}

/// Per-invocation state shared by the command handlers.
struct Context {
    RunConfig config;
    std::string command;
    fs::path out_dir;
    std::shared_ptr<spdlog::logger> log;
    std::ostream& out;
    std::ostream& err;

    Context(RunConfig c, std::string name, std::ostream& o, std::ostream& e)
        : config(std::move(c)), command(std::move(name)), out(o), err(e) {
        out_dir = config.run_dir / command;
        fs::create_directories(out_dir);
        fs::create_directories(config.run_dir / "logs");
        auto sink =
            std::make_shared<spdlog::sinks::basic_file_sink_mt>((config.run_dir / "logs" / (command + ".log")).string());
        log = std::make_shared<spdlog::logger>("judgebench", sink);
        log->set_level(spdlog::level::info);
        log->flush_on(spdlog::level::info);
        write_json(out_dir / "resolved_config.json", json(config));
        log->info("{} started, seed {}", command, config.seed);
    }

    void warn(const std::string& message) {
        err << "warning: " << message << "\n";
        log->warn("{}", message);
    }

    void progress(const std::string& message) {
        err << "[" << command << "] " << message << "\n";
        log->info("{}", message);
    }

    std::unique_ptr<llm::Gateway> gateway() {
        std::shared_ptr<llm::Transport> transport;
        if (config.mock_provider) {
            transport = llm::MockTransport::from_file(*config.mock_provider);
        } else {
            transport = std::make_shared<llm::HttpTransport>(
                llm::HttpEndpoints{config.provider.chat_url, config.provider.embed_url, config.provider.pos_url},
                config.provider.api_key_env, std::chrono::seconds(config.provider.timeout_s));
        }
        llm::GatewayConfig gc;
        gc.cache_dir = config.cache_dir.empty() ? config.run_dir / "cache" : config.cache_dir;
        gc.retry.max_retries = config.provider.max_retries;
        gc.retry.base_delay = std::chrono::milliseconds(config.provider.base_delay_ms);
        gc.retry.max_delay = std::chrono::milliseconds(config.provider.max_delay_ms);
        gc.max_in_flight = config.provider.max_in_flight;
        gc.embed_model = config.provider.embed_model;
        gc.pos_model = config.provider.pos_model;
        return std::make_unique<llm::Gateway>(std::move(transport), std::move(gc));
    }

    void report_gateway(const llm::Gateway& g) {
        progress("provider calls: " + std::to_string(g.network_attempts()) + " network, " +
                 std::to_string(g.cache_hits()) + " cached");
    }
};

struct PreparedCorpus {
    std::size_t docs_total = 0;
    std::vector<corpus::JudgeProfile> profiles;
    std::vector<corpus::VerdictDoc> kept;
    std::vector<corpus::DatasetSplit> splits;
    std::vector<std::string> retained;
};

PreparedCorpus prepare_corpus(const RunConfig& config) {
    if (config.corpus.empty()) {
        throw UsageError("no corpus path given (set \"corpus\" in the config or pass --corpus)");
    }
    if (!fs::exists(config.corpus)) {
        throw UsageError("corpus not found: " + config.corpus.string());
    }
    PreparedCorpus p;
    const auto docs = corpus::load_corpus(config.corpus, {config.strip_niqqud});
    p.docs_total = docs.size();
    auto filtered = corpus::filter_judges(docs, config.min_docs);
    p.profiles = std::move(filtered.profiles);
    p.kept = std::move(filtered.kept);
    std::vector<corpus::SplitItem> items;
    for (const auto& d : p.kept) {
        items.push_back({d.judge_id, d.case_id});
    }
    p.splits = corpus::split_per_judge(items, config.test_ratio, config.seed);
    for (const auto& s : p.splits) {
        p.retained.push_back(s.judge_id);
    }
    return p;
}

/// judge -> test case ids.
std::map<std::string, std::set<std::string>> test_cases(const std::vector<corpus::DatasetSplit>& splits) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& s : splits) {
        out[s.judge_id].insert(s.test.begin(), s.test.end());
    }
    return out;
}

int cmd_ingest(Context& ctx) {
    const auto p = prepare_corpus(ctx.config);
    json profiles = json::array();
    for (const auto& prof : p.profiles) {
        json row = prof;
        row["retained"] = prof.doc_count >= ctx.config.min_docs;
        profiles.push_back(row);
    }
    write_json(ctx.out_dir / "profiles.json", profiles);
    write_json(ctx.out_dir / "splits.json", json(p.splits));
    const json summary = {{"docs_total", p.docs_total},
                          {"judges_total", p.profiles.size()},
                          {"judges_retained", p.retained},
                          {"docs_retained", p.kept.size()},
                          {"min_docs", ctx.config.min_docs},
                          {"test_ratio", ctx.config.test_ratio},
                          {"seed", ctx.config.seed}};
    write_json(ctx.out_dir / "summary.json", summary);
    if (p.retained.empty()) {
        ctx.warn("no judge has at least " + std::to_string(ctx.config.min_docs) + " documents");
    }
    ctx.out << summary.dump(2) << "\n";
    return 0;
}

int cmd_generate(Context& ctx) {
    const auto p = prepare_corpus(ctx.config);
    const fs::path dir = ctx.out_dir;
    if (p.kept.empty()) {
        ctx.warn("no retained judges; writing an empty dataset");
        for (const char* name : {"pairs.jsonl", "pairs_train.jsonl", "pairs_test.jsonl", "tasks_qa_test.jsonl",
                                 "tasks_next_token_test.jsonl"}) {
            io::write_file_atomic(dir / name, "");
        }
        write_json(dir / "report.json", json(qa::PipelineReport{}));
        return 0;
    }

    auto gateway = ctx.gateway();
    qa::PipelineConfig pc;
    pc.extractor_model = ctx.config.models.extractor;
    pc.extractor_temperature = ctx.config.models.extractor_temperature;
    pc.validator_model = ctx.config.models.validator;
    pc.validator_temperature = ctx.config.models.validator_temperature;
    pc.max_tokens = ctx.config.models.max_tokens;
    pc.max_question_words = ctx.config.models.max_question_words;
    pc.workers = ctx.config.workers;
    const std::size_t total_docs = p.kept.size();
    std::mutex progress_mutex;
    pc.on_progress = [&](const qa::StageCounts& c) {
        std::lock_guard lock(progress_mutex);
        ctx.progress("docs " + std::to_string(c.docs_processed + c.docs_skipped) + "/" + std::to_string(total_docs) +
                     " | extracted " + std::to_string(c.extracted) + " | reasoning " +
                     std::to_string(c.reasoning_valid) + " | questions " + std::to_string(c.questions_generated) +
                     " | pairs " + std::to_string(c.pairs_valid) + " | discarded " + std::to_string(c.discarded));
    };
    qa::QaPipeline pipeline(*gateway, pc);
    const auto result = pipeline.run(p.kept);
    ctx.report_gateway(*gateway);

    const auto tests = test_cases(p.splits);
    std::vector<qa::InstructionPair> train;
    std::vector<qa::InstructionPair> test;
    std::vector<json> qa_tasks;
    for (const auto& pair : result.pairs) {
        const bool is_test = tests.at(pair.judge_id).contains(pair.case_id);
        (is_test ? test : train).push_back(pair);
        if (is_test) {
            qa_tasks.push_back({{"judge_id", pair.judge_id},
                                {"task", "qa"},
                                {"item_id", pair.id()},
                                {"prompt", pair.question},
                                {"reference", pair.answer}});
        }
    }
    std::vector<json> ntp_tasks;
    for (const auto& doc : p.kept) {
        if (!tests.at(doc.judge_id).contains(doc.case_id)) {
            continue;
        }
        try {
            const auto task = corpus::make_prefix_task(doc, ctx.config.prefix_fraction);
            ntp_tasks.push_back({{"judge_id", task.judge_id},
                                 {"task", "next_token"},
                                 {"item_id", task.case_id},
                                 {"prompt", task.prefix},
                                 {"reference", task.continuation_reference}});
        } catch (const PreconditionError& e) {
            ctx.warn(doc.case_id + ": no next-token task: " + e.what());
        }
    }
    io::write_file_atomic(dir / "pairs.jsonl", qa::pairs_to_jsonl(result.pairs));
    io::write_file_atomic(dir / "pairs_train.jsonl", qa::pairs_to_jsonl(train));
    io::write_file_atomic(dir / "pairs_test.jsonl", qa::pairs_to_jsonl(test));
    io::write_file_atomic(dir / "tasks_qa_test.jsonl", io::to_jsonl(qa_tasks));
    io::write_file_atomic(dir / "tasks_next_token_test.jsonl", io::to_jsonl(ntp_tasks));
    write_json(dir / "report.json", json(result.report));
    for (const auto& e : result.report.errors) {
        ctx.log->warn("{}", e);
    }

    const auto& totals = result.report.totals;
    ctx.out << json(totals).dump(2) << "\n";
    if (totals.docs_processed == 0 && !result.report.errors.empty()) {
        const bool provider_only = std::all_of(result.report.errors.begin(), result.report.errors.end(),
                                               [](const std::string& e) { return e.find(": provider: ") != std::string::npos; });
        if (provider_only) {
            throw ProviderError("every document failed at the provider; first error: " + result.report.errors.front());
        }
    }
    return 0;
}

int cmd_evaluate(Context& ctx, const fs::path& records_path) {
    if (records_path.empty()) {
        throw UsageError("evaluate needs --records PATH");
    }
    if (!fs::exists(records_path)) {
        throw UsageError("records file not found: " + records_path.string());
    }
    const auto records = metrics::load_records(records_path);
    metrics::Providers providers;
    std::unique_ptr<llm::Gateway> gateway;
    if (ctx.config.embed_metrics || ctx.config.pos_metrics) {
        gateway = ctx.gateway();
        auto all = metrics::Providers::from_gateway(*gateway);
        if (ctx.config.embed_metrics) {
            providers.token_embedder = all.token_embedder;
            providers.text_embedder = all.text_embedder;
        }
        if (ctx.config.pos_metrics) {
            providers.tagger = all.tagger;
        }
    }
    ctx.progress("scoring " + std::to_string(records.size()) + " records");
    const auto table = metrics::score_records(records, providers, {ctx.config.workers});
    if (gateway) {
        ctx.report_gateway(*gateway);
    }
    io::write_file_atomic(ctx.out_dir / "scores.csv", metrics::scores_to_csv(table));
    write_json(ctx.out_dir / "aggregates.json", metrics::aggregates_to_json(table));
    write_json(ctx.out_dir / "errors.json", json(table.errors));
    std::size_t degraded = 0;
    for (const auto& r : table.records) {
        degraded += r.embed.degraded ? 1 : 0;
    }
    if (degraded > 0) {
        ctx.warn(std::to_string(degraded) + " records scored with degraded embedding similarity");
    }
    for (const auto& e : table.errors) {
        ctx.warn(e);
    }
    if (table.records.empty() && !records.empty()) {
        throw DataError("no record could be scored");
    }
    ctx.out << metrics::aggregates_to_json(table).dump(2) << "\n";
    return 0;
}

std::vector<metrics::RecordScore> load_scores(const fs::path& path) {
    if (path.empty()) {
        throw UsageError("this command needs --scores PATH");
    }
    if (!fs::exists(path)) {
        throw UsageError("scores file not found: " + path.string());
    }
    return metrics::parse_scores_csv(io::read_file(path));
}

/// Splits "method:judge" model tags. Tags without a colon are shared
/// (non-personalized) models.
std::pair<std::string, std::string> split_tag(const std::string& tag) {
    const auto colon = tag.rfind(':');
    if (colon == std::string::npos) {
        return {tag, ""};
    }
    return {tag.substr(0, colon), tag.substr(colon + 1)};
}

using ItemValues = std::map<std::string, double>; // item id -> value

struct CrossJudgeInput {
    // method -> model judge -> test judge -> metric -> items
    std::map<std::string, std::map<std::string, std::map<std::string, std::map<std::string, ItemValues>>>> cells;
};

json cross_judge_for(const std::vector<metrics::RecordScore>& scores, metrics::Task task, const RunConfig& config,
                     std::string& markdown) {
    CrossJudgeInput in;
    for (const auto& r : scores) {
        if (r.task != task) {
            continue;
        }
        const auto [method, model_judge] = split_tag(r.model_tag);
        if (model_judge.empty()) {
            continue;
        }
        for (const char* metric : metrics::kMetricNames) {
            const double v = metrics::metric_value(r.metrics, metric);
            if (std::isfinite(v)) {
                in.cells[method][model_judge][r.judge_id][metric][r.item_id] = v;
            }
        }
    }
    json out = json::object();
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Method"};
    for (const char* metric : metrics::kMetricNames) {
        header.emplace_back(metric);
    }
    for (const auto& [method, models] : in.cells) {
        std::set<std::string> judge_set;
        for (const auto& [k, tests] : models) {
            judge_set.insert(k);
            for (const auto& [j, _] : tests) {
                judge_set.insert(j);
            }
        }
        const std::vector<std::string> judges(judge_set.begin(), judge_set.end());
        if (judges.size() < 2) {
            throw DataError("cross-judge: method " + method + " covers fewer than 2 judges");
        }
        std::vector<std::string> row{method};
        for (const char* metric : metrics::kMetricNames) {
            stats::ScoreMatrix m;
            m.judges = judges;
            m.metric_name = metric;
            m.higher_is_better = metrics::higher_is_better(metric);
            m.values.assign(judges.size(), std::vector<double>(judges.size(), 0.0));
            stats::PerItemScores items(judges.size(), std::vector<std::vector<double>>(judges.size()));
            bool available = true;
            for (std::size_t j = 0; j < judges.size() && available; ++j) {
                // Items scored for every model on this test set.
                std::vector<const ItemValues*> column;
                for (std::size_t k = 0; k < judges.size(); ++k) {
                    const ItemValues* values = nullptr;
                    if (auto mk = models.find(judges[k]); mk != models.end()) {
                        if (auto tj = mk->second.find(judges[j]); tj != mk->second.end()) {
                            if (auto mv = tj->second.find(metric); mv != tj->second.end()) {
                                values = &mv->second;
                            }
                        }
                    }
                    if (!values) {
                        available = false;
                        break;
                    }
                    column.push_back(values);
                }
                if (!available) {
                    break;
                }
                std::vector<std::string> common;
                for (const auto& [id, _] : *column.front()) {
                    if (std::all_of(column.begin(), column.end(), [&](const ItemValues* c) { return c->contains(id); })) {
                        common.push_back(id);
                    }
                }
                if (common.size() < 2) {
                    throw DataError("cross-judge: " + method + "/" + metric + ": test set " + judges[j] +
                                    " has fewer than 2 items scored for every model");
                }
                for (std::size_t k = 0; k < judges.size(); ++k) {
                    double sum = 0.0;
                    for (const auto& id : common) {
                        const double v = column[k]->at(id);
                        items[k][j].push_back(v);
                        sum += v;
                    }
                    m.values[k][j] = sum / static_cast<double>(common.size());
                }
            }
            if (!available) {
                row.emplace_back("n/a");
                out[method][metric] = nullptr;
                continue;
            }
            const auto result = stats::specificity_report(m, items, config.resamples,
                                                          derive_seed(config.seed, method + "/" + metric), config.alpha);
            out[method][metric] = result;
            row.push_back(stats::format_gap_cell(result.mean_delta, result.fraction_significant));
        }
        rows.push_back(std::move(row));
    }
    markdown = stats::markdown_table(header, rows);
    return out;
}

int cmd_cross_judge(Context& ctx, const fs::path& scores_path) {
    const auto scores = load_scores(scores_path);
    json report = json::object();
    std::string md;
    for (auto task : {metrics::Task::qa, metrics::Task::next_token}) {
        std::string table;
        auto result = cross_judge_for(scores, task, ctx.config, table);
        if (result.empty()) {
            continue;
        }
        report[std::string(metrics::task_name(task))] = std::move(result);
        md += "### Centered gap, " + std::string(metrics::task_name(task)) +
              " (mean across judges, fraction significant in parentheses)\n\n" + table + "\n";
    }
    if (report.empty()) {
        throw DataError("cross-judge: no personalized model tags of the form method:judge_id in " +
                        scores_path.string());
    }
    write_json(ctx.out_dir / "report.json", report);
    io::write_file_atomic(ctx.out_dir / "report.md", md);
    ctx.out << md;
    return 0;
}

/// Mean per judge of the model a method uses on that judge's test set:
/// "method:j" for personalized methods, the shared tag otherwise.
std::map<std::string, std::map<std::string, std::map<std::string, double>>>
method_judge_means(const std::vector<metrics::RecordScore>& scores, metrics::Task task) {
    std::map<std::string, std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>>> acc;
    for (const auto& r : scores) {
        if (r.task != task) {
            continue;
        }
        const auto [method, model_judge] = split_tag(r.model_tag);
        if (!model_judge.empty() && model_judge != r.judge_id) {
            continue;
        }
        for (const char* metric : metrics::kMetricNames) {
            const double v = metrics::metric_value(r.metrics, metric);
            if (std::isfinite(v)) {
                auto& cell = acc[method][metric][r.judge_id];
                cell.first += v;
                cell.second += 1;
            }
        }
    }
    std::map<std::string, std::map<std::string, std::map<std::string, double>>> out;
    for (const auto& [method, by_metric] : acc) {
        for (const auto& [metric, by_judge] : by_metric) {
            for (const auto& [judge, cell] : by_judge) {
                out[method][metric][judge] = cell.first / static_cast<double>(cell.second);
            }
        }
    }
    return out;
}

std::string fmt3(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << v;
    return s.str();
}

int cmd_report(Context& ctx, const fs::path& scores_path, const std::string& reference) {
    json report = json::object();
    std::string md;
    if (!scores_path.empty()) {
        const auto scores = load_scores(scores_path);
        for (auto task : {metrics::Task::qa, metrics::Task::next_token}) {
            const auto means = method_judge_means(scores, task);
            if (means.empty()) {
                continue;
            }
            if (!reference.empty() && !means.contains(reference)) {
                throw UsageError("report: reference method " + reference + " has no " +
                                 std::string(metrics::task_name(task)) + " scores");
            }
            std::vector<std::string> header{"Method"};
            for (const char* metric : metrics::kMetricNames) {
                header.emplace_back(metric);
            }
            std::vector<std::vector<std::string>> rows;
            json task_json = json::object();
            for (const auto& [method, by_metric] : means) {
                if (method == reference) {
                    continue;
                }
                std::vector<std::string> row{method};
                for (const char* metric : metrics::kMetricNames) {
                    auto it = by_metric.find(metric);
                    if (it == by_metric.end()) {
                        row.emplace_back("n/a");
                        continue;
                    }
                    if (reference.empty()) {
                        double sum = 0.0;
                        for (const auto& [_, v] : it->second) {
                            sum += v;
                        }
                        const double mean = sum / static_cast<double>(it->second.size());
                        task_json[method][metric] = {{"mean", mean}, {"judges", it->second.size()}};
                        row.push_back(fmt3(mean));
                        continue;
                    }
                    // Paired per judge: reference minus method.
                    const auto& ref = means.at(reference).at(metric);
                    std::vector<double> deltas;
                    for (const auto& [judge, v] : it->second) {
                        if (auto r = ref.find(judge); r != ref.end()) {
                            deltas.push_back(r->second - v);
                        }
                    }
                    if (deltas.empty()) {
                        row.emplace_back("n/a");
                        continue;
                    }
                    const double mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) /
                                        static_cast<double>(deltas.size());
                    const auto w = stats::wilcoxon_signed_rank(deltas);
                    const bool significant = !w.degenerate && w.p_two_sided < ctx.config.alpha;
                    task_json[method][metric] = {
                        {"mean_difference", mean}, {"judges", deltas.size()}, {"wilcoxon", w}, {"significant", significant}};
                    row.push_back(fmt3(mean) + (significant ? "" : "*"));
                }
                rows.push_back(std::move(row));
            }
            report[std::string(metrics::task_name(task))] = task_json;
            md += "### " + std::string(metrics::task_name(task)) +
                  (reference.empty() ? ": mean across judges\n\n"
                                     : ": " + reference + " minus method, mean across judges\n\n") +
                  stats::markdown_table(header, rows);
            if (!reference.empty()) {
                md += "\n\\* not significant (p >= " + fmt3(ctx.config.alpha) +
                      ", two-sided signed-rank test across judges).\n";
            }
            md += "\n";
        }
    }
    for (const auto& part : {ctx.config.run_dir / "cross-judge" / "report.md", ctx.config.run_dir / "discern" / "table.md"}) {
        if (fs::exists(part)) {
            md += io::read_file(part) + "\n";
        }
    }
    if (md.empty()) {
        throw UsageError("report: nothing to report (pass --scores or run cross-judge/discern first)");
    }
    write_json(ctx.out_dir / "report.json", report);
    io::write_file_atomic(ctx.out_dir / "report.md", md);
    ctx.out << md;
    return 0;
}

std::vector<discern::LabeledSentence> load_sentences(const fs::path& path, bool positive) {
    std::vector<discern::LabeledSentence> out;
    io::for_each_jsonl(path, [&](std::size_t line, const json& obj) {
        discern::LabeledSentence s;
        s.id = io::require_string(obj, "id", line);
        s.text = io::require_string(obj, "text", line);
        s.positive = positive;
        s.model_tag = obj.value("model_tag", std::string());
        const auto source = obj.value("source", std::string(positive ? "real_judge" : "real_other_judge"));
        if (source == "real_judge") {
            s.source = discern::Source::real_judge;
        } else if (source == "real_other_judge") {
            s.source = discern::Source::real_other_judge;
        } else if (source == "generated") {
            s.source = discern::Source::generated;
        } else {
            throw DataError(path.string() + ": line " + std::to_string(line) + ": unknown source " + source);
        }
        out.push_back(std::move(s));
    });
    return out;
}

int cmd_discern(Context& ctx, const fs::path& manifest_path) {
    if (manifest_path.empty()) {
        throw UsageError("discern needs --manifest PATH");
    }
    if (!fs::exists(manifest_path)) {
        throw UsageError("manifest not found: " + manifest_path.string());
    }
    json manifest;
    try {
        manifest = json::parse(io::read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw UsageError("manifest: " + std::string(e.what()));
    }
    if (!manifest.contains("judges") || !manifest["judges"].is_array() || manifest["judges"].empty()) {
        throw UsageError("manifest lists no judges");
    }
    const fs::path base = manifest_path.parent_path();
    auto resolve = [&](const json& entry, const char* key) {
        if (!entry.contains(key) || !entry[key].is_string()) {
            throw UsageError(std::string("manifest: missing ") + key);
        }
        fs::path p = entry[key].get<std::string>();
        return p.is_relative() ? base / p : p;
    };

    discern::RunOptions options;
    options.spec = ctx.config.discern.features;
    options.train.epochs = ctx.config.discern.epochs;
    options.train.learning_rate = ctx.config.discern.learning_rate;
    options.train.l2 = ctx.config.discern.l2;
    options.test_fraction = ctx.config.discern.test_fraction;
    options.seed = ctx.config.seed;

    std::unique_ptr<llm::Gateway> gateway;
    discern::Featurizer featurizer;
    if (options.spec.kind == discern::FeatureKind::embedding) {
        gateway = ctx.gateway();
        featurizer = [&, spec = options.spec](std::string_view text) {
            return discern::featurize_embedding(text, spec, [&](std::string_view t) { return gateway->embed_text(t); });
        };
    }

    json per_judge = json::array();
    std::map<std::string, discern::SettingSummary> by_setting;
    std::vector<std::string> setting_order;
    for (const auto& entry : manifest["judges"]) {
        if (!entry.contains("judge_id") || !entry["judge_id"].is_string()) {
            throw UsageError("manifest: judge entry without judge_id");
        }
        const std::string judge = entry["judge_id"].get<std::string>();
        const auto positives = load_sentences(resolve(entry, "positives"), true);
        if (!entry.contains("settings") || !entry["settings"].is_array() || entry["settings"].empty()) {
            throw UsageError("manifest: judge " + judge + " has no settings");
        }
        std::vector<discern::SettingInput> settings;
        for (const auto& s : entry["settings"]) {
            discern::SettingInput in;
            in.name = s.value("name", std::string());
            if (in.name.empty()) {
                throw UsageError("manifest: setting without name for judge " + judge);
            }
            in.group = s.value("group", std::string());
            in.negatives = load_sentences(resolve(s, "negatives"), false);
            settings.push_back(std::move(in));
        }
        ctx.progress("judge " + judge + ": " + std::to_string(settings.size()) + " settings");
        const auto results = discern::run_settings(judge, positives, settings, options, featurizer);
        per_judge.push_back({{"judge_id", judge}, {"settings", results}});
        for (const auto& r : results) {
            auto [it, inserted] = by_setting.try_emplace(r.name);
            if (inserted) {
                setting_order.push_back(r.name);
                it->second.name = r.name;
                it->second.group = r.group;
            }
            it->second.accuracy_by_judge[judge] = r.accuracy;
        }
    }
    std::vector<discern::SettingSummary> summaries;
    for (const auto& name : setting_order) {
        summaries.push_back(by_setting.at(name));
    }
    const auto rows = discern::summarize(summaries, ctx.config.alpha);
    const std::string md = "### Authorship discernment (mean held-out accuracy across judges)\n\n" +
                           discern::summary_markdown(rows);
    write_json(ctx.out_dir / "results.json", per_judge);
    write_json(ctx.out_dir / "summary.json", json(rows));
    io::write_file_atomic(ctx.out_dir / "table.md", md);
    ctx.out << md;
    return 0;
}

int cmd_ablate(Context& ctx, const fs::path& pairs_path) {
    const auto p = prepare_corpus(ctx.config);
    std::vector<qa::InstructionPair> pairs;
    if (!pairs_path.empty()) {
        if (!fs::exists(pairs_path)) {
            throw UsageError("pairs file not found: " + pairs_path.string());
        }
        pairs = qa::read_pairs_jsonl(pairs_path);
    }
    json sizes = json::object();
    std::vector<std::string> header{"Judge"};
    for (double f : ctx.config.ablation_fractions) {
        header.push_back(fraction_label(f));
    }
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, std::vector<std::size_t>> judge_sizes;
    for (double f : ctx.config.ablation_fractions) {
        std::vector<corpus::DatasetSplit> subsets;
        std::map<std::string, std::set<std::string>> keep;
        for (const auto& split : p.splits) {
            auto sub = corpus::subsample_train(split, f, ctx.config.seed);
            judge_sizes[split.judge_id].push_back(sub.train.size());
            keep[split.judge_id].insert(sub.train.begin(), sub.train.end());
            subsets.push_back(std::move(sub));
        }
        write_json(ctx.out_dir / ("splits_" + fraction_label(f) + ".json"), json(subsets));
        if (!pairs_path.empty()) {
            std::vector<qa::InstructionPair> kept;
            for (const auto& pair : pairs) {
                if (auto it = keep.find(pair.judge_id); it != keep.end() && it->second.contains(pair.case_id)) {
                    kept.push_back(pair);
                }
            }
            io::write_file_atomic(ctx.out_dir / ("pairs_train_" + fraction_label(f) + ".jsonl"),
                                  qa::pairs_to_jsonl(kept));
        }
    }
    for (const auto& [judge, counts] : judge_sizes) {
        sizes[judge] = counts;
        std::vector<std::string> row{judge};
        for (std::size_t c : counts) {
            row.push_back(std::to_string(c));
        }
        rows.push_back(std::move(row));
    }
    if (p.splits.empty()) {
        ctx.warn("no retained judges; nothing to subsample");
    }
    write_json(ctx.out_dir / "summary.json",
               {{"fractions", ctx.config.ablation_fractions}, {"seed", ctx.config.seed}, {"train_sizes", sizes}});
    ctx.out << stats::markdown_table(header, rows);
    return 0;
}

int cmd_rag(Context& ctx, const fs::path& pairs_path, const fs::path& queries_path, const fs::path& template_path) {
    if (pairs_path.empty() || queries_path.empty()) {
        throw UsageError("rag needs --pairs PATH (examples) and --queries PATH (questions)");
    }
    for (const auto& p : {pairs_path, queries_path}) {
        if (!fs::exists(p)) {
            throw UsageError("file not found: " + p.string());
        }
    }
    const std::string tmpl = template_path.empty() ? std::string(prompts::rag_template()) : io::read_file(template_path);
    const auto examples = qa::read_pairs_jsonl(pairs_path);
    const auto queries = qa::read_pairs_jsonl(queries_path);
    std::map<std::string, std::vector<qa::InstructionPair>> by_judge;
    for (const auto& pair : examples) {
        by_judge[pair.judge_id].push_back(pair);
    }
    auto gateway = ctx.gateway();
    const retrieval::Embedder embed = [&](std::string_view s) { return gateway->embed_text(s); };
    std::map<std::string, retrieval::PairIndex> indices;
    std::map<std::string, std::map<std::string, const qa::InstructionPair*>> lookup;
    for (const auto& [judge, pairs] : by_judge) {
        indices.emplace(judge, retrieval::build_index(pairs, embed));
        io::write_file_atomic(ctx.out_dir / ("index_" + judge + ".jsonl"), retrieval::index_to_jsonl(indices.at(judge)));
        for (const auto& pair : pairs) {
            lookup[judge][pair.id()] = &pair;
        }
    }
    for (std::size_t k : ctx.config.rag_k) {
        std::vector<json> rows;
        for (const auto& q : queries) {
            auto it = indices.find(q.judge_id);
            if (it == indices.end()) {
                throw DataError("rag: no example pairs for judge " + q.judge_id);
            }
            const std::size_t kk = std::min(k, it->second.entries.size());
            const auto hits = retrieval::query(it->second, q.question, embed, kk);
            std::vector<qa::InstructionPair> retrieved;
            json ids = json::array();
            for (const auto& h : hits) {
                retrieved.push_back(*lookup[q.judge_id].at(h.pair_id));
                ids.push_back({{"pair_id", h.pair_id}, {"score", h.score}});
            }
            const auto prompt = retrieval::build_rag_prompt(q.question, retrieved, tmpl);
            rows.push_back({{"judge_id", q.judge_id},
                            {"task", "qa"},
                            {"item_id", q.id()},
                            {"k", kk},
                            {"prompt", prompt.text},
                            {"prompt_length", prompt.length},
                            {"retrieved", ids},
                            {"reference", q.answer}});
        }
        io::write_file_atomic(ctx.out_dir / ("prompts_k" + std::to_string(k) + ".jsonl"), io::to_jsonl(rows));
        ctx.progress("k=" + std::to_string(k) + ": " + std::to_string(rows.size()) + " prompts");
    }
    ctx.report_gateway(*gateway);
    return 0;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Build per-judge instruction benchmarks and score personalized generations."};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "judgebench 0.3.0");

    Overrides overrides;
    std::string config_path, cache_dir, mock_provider, run_dir, corpus_path;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "Run configuration JSON");
    auto* seed_opt = app.add_option("--seed", seed, "Master seed");
    app.add_option("--cache-dir", cache_dir, "Provider response cache directory");
    app.add_option("--mock-provider", mock_provider, "Scripted provider responses (JSON) instead of HTTP");
    app.add_option("--run-dir", run_dir, "Output directory");
    app.add_option("--corpus", corpus_path, "Verdict corpus JSONL");

    auto* ingest = app.add_subcommand("ingest", "Load, normalize, filter and split the corpus");
    auto* generate = app.add_subcommand("generate", "Run the question/answer generation workflow");
    auto* evaluate = app.add_subcommand("evaluate", "Score generation records");
    auto* cross = app.add_subcommand("cross-judge", "Test-set centered gaps with bootstrap significance");
    auto* discern_cmd = app.add_subcommand("discern", "Authorship discernment classifiers");
    auto* ablate = app.add_subcommand("ablate", "Nested training-data subsamples");
    auto* report = app.add_subcommand("report", "Markdown/JSON summary tables");
    auto* rag = app.add_subcommand("rag", "Retrieval-augmented prompts from a judge's pairs");

    std::string records, scores, manifest, pairs, queries, rag_template, reference;
    evaluate->add_option("--records", records, "Generation-record JSONL");
    cross->add_option("--scores", scores, "Scores CSV from evaluate");
    report->add_option("--scores", scores, "Scores CSV from evaluate");
    report->add_option("--reference", reference, "Method the others are compared against");
    discern_cmd->add_option("--manifest", manifest, "Settings manifest JSON");
    ablate->add_option("--pairs", pairs, "Instruction pairs to subsample alongside the splits");
    rag->add_option("--pairs", pairs, "Example pairs (training split)");
    rag->add_option("--queries", queries, "Pairs whose questions are queried (test split)");
    rag->add_option("--template", rag_template, "Prompt template with {examples} and {question}");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (!config_path.empty()) overrides.config = config_path;
        if (*seed_opt) overrides.seed = seed;
        if (!cache_dir.empty()) overrides.cache_dir = cache_dir;
        if (!mock_provider.empty()) overrides.mock_provider = mock_provider;
        if (!run_dir.empty()) overrides.run_dir = run_dir;
        if (!corpus_path.empty()) overrides.corpus = corpus_path;
        auto config = resolve_config(overrides);

        auto* sub = app.get_subcommands().front();
        Context ctx(std::move(config), sub->get_name(), out, err);
        int code = 0;
        if (sub == ingest) {
            code = cmd_ingest(ctx);
        } else if (sub == generate) {
            code = cmd_generate(ctx);
        } else if (sub == evaluate) {
            code = cmd_evaluate(ctx, records);
        } else if (sub == cross) {
            code = cmd_cross_judge(ctx, scores);
        } else if (sub == discern_cmd) {
            code = cmd_discern(ctx, manifest);
        } else if (sub == ablate) {
            code = cmd_ablate(ctx, pairs);
        } else if (sub == report) {
            code = cmd_report(ctx, scores, reference);
        } else if (sub == rag) {
            code = cmd_rag(ctx, pairs, queries, rag_template);
        }
        ctx.log->info("{} finished", ctx.command);
        return code;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ProviderError& e) {
        err << "provider error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const spdlog::spdlog_ex& e) {
        err << "data error: cannot open log: " << e.what() << "\n";
        return 2;
    }
}

} // namespace judgebench::cli
