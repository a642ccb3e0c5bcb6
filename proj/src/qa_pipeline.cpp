#include "judgebench/qa_pipeline.hpp"

#include "judgebench/error.hpp"
#include "judgebench/io.hpp"
#include "judgebench/prompts.hpp"
#include "judgebench/text.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

namespace judgebench::qa {

using nlohmann::json;

namespace {

constexpr const char* kExtract = "extract";
constexpr const char* kValidateReasoning = "validate_reasoning";
constexpr const char* kGenerateQuestion = "generate_question";
constexpr const char* kValidatePair = "validate_pair";

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string strip_code_fence(std::string_view s) {
    s = trim(s);
    if (s.starts_with("```")) {
        const auto newline = s.find('\n');
        s = newline == std::string_view::npos ? std::string_view{} : s.substr(newline + 1);
        const auto close = s.rfind("```");
        if (close != std::string_view::npos) {
            s = s.substr(0, close);
        }
    }
    return std::string(trim(s));
}

std::optional<std::vector<std::string>> strings_of(const json& array) {
    if (!array.is_array()) {
        return std::nullopt;
    }
    std::vector<std::string> out;
    for (const auto& item : array) {
        if (!item.is_string()) {
            return std::nullopt;
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::uint64_t nonce_for(int attempt, int reprompt) {
    return static_cast<std::uint64_t>((attempt - 1) * 2 + reprompt);
}

} // namespace

std::string InstructionPair::id() const { return case_id + "#" + std::to_string(sentence_idx); }

StageCounts& StageCounts::operator+=(const StageCounts& other) {
    extracted += other.extracted;
    reasoning_valid += other.reasoning_valid;
    questions_generated += other.questions_generated;
    pairs_valid += other.pairs_valid;
    discarded += other.discarded;
    docs_processed += other.docs_processed;
    docs_skipped += other.docs_skipped;
    non_verbatim += other.non_verbatim;
    question_failures += other.question_failures;
    return *this;
}

std::optional<std::vector<std::string>> parse_sentence_list(std::string_view response) {
    const std::string body = strip_code_fence(response);
    if (body.empty()) {
        return std::nullopt;
    }
    json parsed = json::parse(body, nullptr, false);
    if (parsed.is_discarded()) {
        // Tolerate prose around a single JSON value.
        const auto open = body.find_first_of("[{");
        const auto close = body.find_last_of("]}");
        if (open == std::string::npos || close == std::string::npos || close < open) {
            return std::nullopt;
        }
        parsed = json::parse(body.substr(open, close - open + 1), nullptr, false);
        if (parsed.is_discarded()) {
            return std::nullopt;
        }
    }
    if (parsed.is_array()) {
        return strings_of(parsed);
    }
    if (parsed.is_object()) {
        const std::string key = "משפטים";
        if (parsed.contains(key)) {
            return strings_of(parsed[key]);
        }
        std::optional<std::vector<std::string>> found;
        for (const auto& [_, value] : parsed.items()) {
            if (value.is_array()) {
                if (found) {
                    return std::nullopt;
                }
                found = strings_of(value);
                if (!found) {
                    return std::nullopt;
                }
            }
        }
        return found;
    }
    return std::nullopt;
}

std::optional<ParsedQuestion> parse_numbered_question(std::string_view response) {
    static const std::regex numbered(R"(^\s*\d+\s*[.)]\s*(.*\S)\s*$)");
    std::optional<ParsedQuestion> result;
    std::size_t non_empty = 0;
    std::size_t start = 0;
    while (start <= response.size()) {
        auto end = response.find('\n', start);
        if (end == std::string_view::npos) {
            end = response.size();
        }
        const std::string line(response.substr(start, end - start));
        start = end + 1;
        if (trim(line).empty()) {
            continue;
        }
        ++non_empty;
        std::smatch match;
        if (!result && std::regex_match(line, match, numbered)) {
            result = ParsedQuestion{std::string(trim(match[1].str())), false};
        }
    }
    if (result) {
        result->multiple_lines = non_empty > 1;
    }
    return result;
}

QaPipeline::QaPipeline(llm::Gateway& gateway, PipelineConfig config) : gateway_(gateway), config_(std::move(config)) {}

llm::ChatResponse QaPipeline::ask(std::string_view system_prompt, std::string user_prompt, bool extractor,
                                  std::uint64_t nonce) {
    llm::ChatRequest request;
    request.model_tag = extractor ? config_.extractor_model : config_.validator_model;
    request.temperature = extractor ? config_.extractor_temperature : config_.validator_temperature;
    request.system_prompt = std::string(system_prompt);
    request.user_prompt = std::move(user_prompt);
    request.max_tokens = config_.max_tokens;
    request.nonce = nonce;
    return gateway_.complete(request);
}

std::vector<ReasoningSentence> QaPipeline::extract_reasoning(const corpus::VerdictDoc& doc) {
    std::optional<std::vector<std::string>> raw;
    for (int reprompt = 0; reprompt < 2 && !raw; ++reprompt) {
        raw = parse_sentence_list(ask(prompts::extract_reasoning(), doc.text, true, nonce_for(1, reprompt)).text);
    }
    if (!raw) {
        throw StageError("extract: no JSON sentence list after reprompt");
    }
    std::vector<ReasoningSentence> out;
    std::set<std::string> seen;
    for (const auto& candidate : *raw) {
        std::string sentence = text::normalize(candidate);
        if (sentence.empty() || !seen.insert(sentence).second) {
            continue;
        }
        ReasoningSentence rs;
        rs.judge_id = doc.judge_id;
        rs.case_id = doc.case_id;
        rs.sentence = std::move(sentence);
        rs.sentence_idx = static_cast<int>(out.size());
        rs.extraction_model = config_.extractor_model;
        out.push_back(std::move(rs));
    }
    return out;
}

bool QaPipeline::validate_reasoning(const ReasoningSentence& sentence) {
    std::string reply;
    for (int reprompt = 0; reprompt < 2; ++reprompt) {
        reply = std::string(trim(ask(prompts::validate_reasoning(), sentence.sentence, false, nonce_for(1, reprompt)).text));
        if (!reply.empty()) {
            break;
        }
    }
    std::string_view token = reply;
    if (token.ends_with('.')) {
        token.remove_suffix(1);
    }
    return trim(token) == prompts::kReasoningYes;
}

std::optional<std::string> QaPipeline::generate_question(const ReasoningSentence& sentence, int attempt,
                                                         std::vector<StageEvent>* log) {
    const std::string user = "1. Answer: " + sentence.sentence;
    for (int reprompt = 0; reprompt < 2; ++reprompt) {
        const auto reply = ask(prompts::generate_question(), user, true, nonce_for(attempt, reprompt));
        auto parsed = parse_numbered_question(reply.text);
        if (!parsed) {
            if (log) {
                log->push_back({kGenerateQuestion, reply.text.empty() ? "empty" : "parse_error", attempt});
            }
            continue;
        }
        if (log) {
            if (parsed->multiple_lines) {
                log->push_back({kGenerateQuestion, "warn_multiline", attempt});
            }
            if (text::word_count(parsed->question) > config_.max_question_words) {
                log->push_back({kGenerateQuestion, "warn_length", attempt});
            }
            log->push_back({kGenerateQuestion, "ok", attempt});
        }
        return std::move(parsed->question);
    }
    return std::nullopt;
}

bool QaPipeline::validate_pair(std::string_view question, std::string_view answer, int attempt) {
    std::string user = "שאלה: ";
    user.append(question);
    user.append("\nתשובה: ");
    user.append(answer);
    const auto reply = ask(prompts::validate_pair(), std::move(user), false, nonce_for(attempt, 0));
    return trim(reply.text) == "1";
}

QaPipeline::DocOutcome QaPipeline::process(const corpus::VerdictDoc& doc) {
    DocOutcome outcome;
    std::vector<ReasoningSentence> sentences;
    try {
        sentences = extract_reasoning(doc);
    } catch (const StageError& e) {
        outcome.counts.docs_skipped = 1;
        outcome.errors.push_back(doc.case_id + ": " + e.what());
        return outcome;
    } catch (const ProviderError& e) {
        outcome.counts.docs_skipped = 1;
        outcome.errors.push_back(doc.case_id + ": provider: " + e.what());
        return outcome;
    }
    outcome.counts.docs_processed = 1;

    int next_idx = 0;
    for (auto& sentence : sentences) {
        if (doc.text.find(sentence.sentence) == std::string::npos) {
            ++outcome.counts.non_verbatim;
            outcome.warnings.push_back(doc.case_id + ": dropped non-verbatim sentence");
            continue;
        }
        sentence.sentence_idx = next_idx++;
        ++outcome.counts.extracted;

        bool question_counted = false;
        try {
            std::vector<StageEvent> log{{kExtract, "ok", 1}};
            const bool valid = validate_reasoning(sentence);
            log.push_back({kValidateReasoning, valid ? "accept" : "reject", 1});
            if (!valid) {
                continue;
            }
            ++outcome.counts.reasoning_valid;

            auto question = generate_question(sentence, 1, &log);
            if (!question) {
                ++outcome.counts.question_failures;
                outcome.warnings.push_back(sentence.case_id + "#" + std::to_string(sentence.sentence_idx) +
                                           ": no question after reprompt");
                continue;
            }
            ++outcome.counts.questions_generated;
            question_counted = true;

            bool accepted = false;
            for (int attempt = 1; attempt <= 2 && question; ++attempt) {
                if (attempt == 2) {
                    question = generate_question(sentence, 2, &log);
                    if (!question) {
                        break;
                    }
                }
                accepted = validate_pair(*question, sentence.sentence, attempt);
                log.push_back({kValidatePair, accepted ? "accept" : "reject", attempt});
                if (accepted) {
                    break;
                }
            }
            if (!accepted) {
                ++outcome.counts.discarded;
                continue;
            }
            ++outcome.counts.pairs_valid;
            InstructionPair pair;
            pair.judge_id = sentence.judge_id;
            pair.case_id = sentence.case_id;
            pair.sentence_idx = sentence.sentence_idx;
            pair.question = std::move(*question);
            pair.answer = sentence.sentence;
            pair.stage_log = std::move(log);
            pair.prompt_hash = std::string(prompts::prompt_set_hash());
            outcome.pairs.push_back(std::move(pair));
        } catch (const ProviderError& e) {
            if (question_counted) {
                ++outcome.counts.discarded;
            }
            outcome.errors.push_back(sentence.case_id + "#" + std::to_string(sentence.sentence_idx) +
                                     ": provider: " + e.what());
        }
    }
    return outcome;
}

PipelineResult QaPipeline::run(const std::vector<corpus::VerdictDoc>& docs) {
    std::vector<DocOutcome> outcomes(docs.size());
    StageCounts running;
    std::mutex progress_mutex;
    auto finish = [&](std::size_t i) {
        std::lock_guard lock(progress_mutex);
        running += outcomes[i].counts;
        if (config_.on_progress) {
            config_.on_progress(running);
        }
    };

    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(1, config_.workers), docs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < docs.size(); ++i) {
            outcomes[i] = process(docs[i]);
            finish(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < docs.size(); i = next++) {
                    outcomes[i] = process(docs[i]);
                    finish(i);
                }
            });
        }
    }

    PipelineResult result;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto& outcome = outcomes[i];
        result.report.totals += outcome.counts;
        result.report.per_judge[docs[i].judge_id] += outcome.counts;
        std::move(outcome.pairs.begin(), outcome.pairs.end(), std::back_inserter(result.pairs));
        std::move(outcome.errors.begin(), outcome.errors.end(), std::back_inserter(result.report.errors));
        std::move(outcome.warnings.begin(), outcome.warnings.end(), std::back_inserter(result.report.warnings));
    }
    std::sort(result.pairs.begin(), result.pairs.end(), [](const InstructionPair& a, const InstructionPair& b) {
        return std::tie(a.case_id, a.sentence_idx, a.judge_id) < std::tie(b.case_id, b.sentence_idx, b.judge_id);
    });
    std::sort(result.report.errors.begin(), result.report.errors.end());
    std::sort(result.report.warnings.begin(), result.report.warnings.end());
    return result;
}

void to_json(json& j, const StageEvent& event) {
    j = {{"stage", event.stage}, {"verdict", event.verdict}, {"attempt", event.attempt}};
}

void from_json(const json& j, StageEvent& event) {
    j.at("stage").get_to(event.stage);
    j.at("verdict").get_to(event.verdict);
    j.at("attempt").get_to(event.attempt);
}

void to_json(json& j, const InstructionPair& pair) {
    j = {{"judge_id", pair.judge_id},       {"case_id", pair.case_id}, {"sentence_idx", pair.sentence_idx},
         {"question", pair.question},       {"answer", pair.answer},   {"stage_log", pair.stage_log},
         {"prompt_hash", pair.prompt_hash}};
}

void from_json(const json& j, InstructionPair& pair) {
    j.at("judge_id").get_to(pair.judge_id);
    j.at("case_id").get_to(pair.case_id);
    pair.sentence_idx = j.value("sentence_idx", 0);
    j.at("question").get_to(pair.question);
    j.at("answer").get_to(pair.answer);
    if (j.contains("stage_log")) {
        j.at("stage_log").get_to(pair.stage_log);
    }
    pair.prompt_hash = j.value("prompt_hash", "");
}

void to_json(json& j, const StageCounts& counts) {
    j = {{"extracted", counts.extracted},
         {"reasoning_valid", counts.reasoning_valid},
         {"questions_generated", counts.questions_generated},
         {"pairs_valid", counts.pairs_valid},
         {"discarded", counts.discarded},
         {"docs_processed", counts.docs_processed},
         {"docs_skipped", counts.docs_skipped},
         {"non_verbatim", counts.non_verbatim},
         {"question_failures", counts.question_failures}};
}

void to_json(json& j, const PipelineReport& report) {
    j = {{"totals", report.totals},
         {"per_judge", report.per_judge},
         {"errors", report.errors},
         {"warnings", report.warnings},
         {"prompt_hash", prompts::prompt_set_hash()}};
}

std::string pairs_to_jsonl(const std::vector<InstructionPair>& pairs) {
    std::string out;
    for (const auto& pair : pairs) {
        out += json(pair).dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<InstructionPair> read_pairs_jsonl(const std::filesystem::path& path) {
    std::vector<InstructionPair> pairs;
    io::for_each_jsonl(path, [&](std::size_t line, const json& obj) {
        try {
            pairs.push_back(obj.get<InstructionPair>());
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(line) + ": " + e.what());
        }
    });
    return pairs;
}

} // namespace judgebench::qa
