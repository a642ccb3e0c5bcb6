#pragma once

#include "judgebench/corpus.hpp"
#include "judgebench/llm_gateway.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace judgebench::qa {

struct ReasoningSentence {
    std::string judge_id;
    std::string case_id;
    std::string sentence;
    int sentence_idx = 0;
    std::string extraction_model;
};

struct StageEvent {
    std::string stage;   ///< extract | validate_reasoning | generate_question | validate_pair
    std::string verdict; ///< ok, accept, reject, parse_error, empty, warn_length, ...
    int attempt = 1;

    bool operator==(const StageEvent&) const = default;
};

/// Generated question paired with an extracted (verbatim) reasoning sentence.
struct InstructionPair {
    std::string judge_id;
    std::string case_id;
    int sentence_idx = 0;
    std::string question;
    std::string answer;
    std::vector<StageEvent> stage_log;
    std::string prompt_hash;

    /// "<case_id>#<sentence_idx>"; unique within one judge.
    [[nodiscard]] std::string id() const;
};

struct StageCounts {
    std::size_t extracted = 0;
    std::size_t reasoning_valid = 0;
    std::size_t questions_generated = 0;
    std::size_t pairs_valid = 0;
    std::size_t discarded = 0;
    std::size_t docs_processed = 0;
    std::size_t docs_skipped = 0;
    std::size_t non_verbatim = 0;      ///< extracted strings absent from the source text
    std::size_t question_failures = 0; ///< first generation produced no usable line

    StageCounts& operator+=(const StageCounts& other);
    bool operator==(const StageCounts&) const = default;
};

struct PipelineReport {
    StageCounts totals;
    std::map<std::string, StageCounts> per_judge;
    std::vector<std::string> errors;   ///< "<case_id>: <message>", sorted
    std::vector<std::string> warnings; ///< sorted
};

struct PipelineResult {
    std::vector<InstructionPair> pairs; ///< sorted by (case_id, sentence_idx, judge_id)
    PipelineReport report;
};

struct PipelineConfig {
    std::string extractor_model = llm::kDefaultExtractorModel;
    double extractor_temperature = llm::kDefaultExtractorTemperature;
    std::string validator_model = llm::kDefaultValidatorModel;
    double validator_temperature = llm::kDefaultValidatorTemperature;
    int max_tokens = 2048;
    std::size_t workers = 1;
    std::size_t max_question_words = 25;
    /// Called after each document with running totals (for live progress).
    std::function<void(const StageCounts&)> on_progress;
};

/// Raised when a stage cannot produce usable output after its reprompt.
class StageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Parses Step-1 output: a bare JSON array of strings or an object holding
/// one (the prompt asks for the key "משפטים"). Markdown code fences are
/// tolerated. Returns nullopt when no list can be recovered.
[[nodiscard]] std::optional<std::vector<std::string>> parse_sentence_list(std::string_view response);

struct ParsedQuestion {
    std::string question;
    bool multiple_lines = false;
};
/// First line of the form "<n>. text" or "<n>) text", numbering stripped.
[[nodiscard]] std::optional<ParsedQuestion> parse_numbered_question(std::string_view response);

/// The four-stage question/answer workflow.
///
/// Steps 1 and 3 run on the extractor model, steps 2 and 4 on the validator
/// model. Retry rules: Step 1 and Step 3 reprompt once on unparseable output;
/// Step 2 re-asks once on an empty reply and maps anything but the exact
/// affirmative token to "no"; a Step-4 rejection triggers one fresh question
/// and a second validation, and a second rejection discards the pair.
class QaPipeline {
  public:
    QaPipeline(llm::Gateway& gateway, PipelineConfig config = {});

    /// Throws StageError after two unparseable replies.
    [[nodiscard]] std::vector<ReasoningSentence> extract_reasoning(const corpus::VerdictDoc& doc);
    [[nodiscard]] bool validate_reasoning(const ReasoningSentence& sentence);
    /// nullopt when no numbered line comes back after one reprompt.
    [[nodiscard]] std::optional<std::string> generate_question(const ReasoningSentence& sentence, int attempt = 1,
                                                               std::vector<StageEvent>* log = nullptr);
    [[nodiscard]] bool validate_pair(std::string_view question, std::string_view answer, int attempt = 1);

    /// Per-document failures land in the report; the run never aborts.
    [[nodiscard]] PipelineResult run(const std::vector<corpus::VerdictDoc>& docs);

    [[nodiscard]] const PipelineConfig& config() const noexcept { return config_; }

  private:
    struct DocOutcome {
        std::vector<InstructionPair> pairs;
        StageCounts counts;
        std::vector<std::string> errors;
        std::vector<std::string> warnings;
    };
    DocOutcome process(const corpus::VerdictDoc& doc);
    llm::ChatResponse ask(std::string_view system_prompt, std::string user_prompt, bool extractor,
                          std::uint64_t nonce);

    llm::Gateway& gateway_;
    PipelineConfig config_;
};

void to_json(nlohmann::json& j, const StageEvent& event);
void from_json(const nlohmann::json& j, StageEvent& event);
void to_json(nlohmann::json& j, const InstructionPair& pair);
void from_json(const nlohmann::json& j, InstructionPair& pair);
void to_json(nlohmann::json& j, const StageCounts& counts);
void to_json(nlohmann::json& j, const PipelineReport& report);

[[nodiscard]] std::string pairs_to_jsonl(const std::vector<InstructionPair>& pairs);
[[nodiscard]] std::vector<InstructionPair> read_pairs_jsonl(const std::filesystem::path& path);

} // namespace judgebench::qa
