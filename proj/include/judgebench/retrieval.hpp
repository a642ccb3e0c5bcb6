#pragma once

#include "judgebench/qa_pipeline.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace judgebench::retrieval {

/// Preset neighbour counts for the RAG baselines (RAG-3k, RAG-5k).
inline constexpr std::size_t kDefaultKValues[] = {3, 5};

using Embedder = std::function<std::vector<double>(std::string_view)>;

struct IndexEntry {
    std::string pair_id;
    std::vector<double> vector; ///< unit length (or all zeros)
};

/// Exact cosine index over one judge's instruction pairs.
struct PairIndex {
    std::string judge_id;
    std::size_t dimension = 0;
    std::vector<IndexEntry> entries;
};

struct Hit {
    std::string pair_id;
    double score = 0.0;

    bool operator==(const Hit&) const = default;
};

/// Rescales to unit L2 norm; zero vectors stay zero.
[[nodiscard]] std::vector<double> l2_normalize(std::vector<double> v);

/// Embeds each pair's question. Pairs must be non-empty, share a judge and
/// have unique ids.
[[nodiscard]] PairIndex build_index(const std::vector<qa::InstructionPair>& pairs, const Embedder& embed);

/// Index from precomputed vectors; same invariants as build_index.
[[nodiscard]] PairIndex build_index(std::string judge_id, std::vector<IndexEntry> entries);

/// Top-k by cosine, descending, ties by pair id ascending. 1 <= k <= size.
[[nodiscard]] std::vector<Hit> query(const PairIndex& index, std::span<const double> question_vector, std::size_t k);
[[nodiscard]] std::vector<Hit> query(const PairIndex& index, std::string_view question, const Embedder& embed,
                                     std::size_t k);

struct RagPrompt {
    std::string text;
    std::size_t length = 0; ///< in Unicode code points
};

inline constexpr std::string_view kExamplesPlaceholder = "{examples}";
inline constexpr std::string_view kQuestionPlaceholder = "{question}";

/// Fills `{examples}` with one block per retrieved pair, in rank order, and
/// `{question}` with the question. Missing placeholders throw.
[[nodiscard]] RagPrompt build_rag_prompt(std::string_view question, const std::vector<qa::InstructionPair>& retrieved,
                                         std::string_view template_text);

/// JSONL of {pair_id, vector}; the judge id is carried by the caller.
[[nodiscard]] std::string index_to_jsonl(const PairIndex& index);
[[nodiscard]] PairIndex load_index(const std::filesystem::path& path, std::string judge_id);

} // namespace judgebench::retrieval
