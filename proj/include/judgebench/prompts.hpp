#pragma once

#include <string_view>

namespace judgebench::prompts {

/// Step 1: pull explanatory sentences out of a verdict as a JSON list.
[[nodiscard]] std::string_view extract_reasoning();
/// Step 2: answer only "כן" or "לא"; borderline means "לא".
[[nodiscard]] std::string_view validate_reasoning();
/// Step 3: one numbered Hebrew question per Answer.
[[nodiscard]] std::string_view generate_question();
/// Step 4: answer only "1" or "0".
[[nodiscard]] std::string_view validate_pair();
/// Default retrieval-augmented prompt template.
[[nodiscard]] std::string_view rag_template();

/// SHA-256 over the four stage prompts; stamped on every generated pair.
[[nodiscard]] std::string_view prompt_set_hash();

/// Affirmative/negative tokens expected by the validation prompts.
inline constexpr std::string_view kReasoningYes = "כן";
inline constexpr std::string_view kReasoningNo = "לא";

} // namespace judgebench::prompts
