#include "judgebench/retrieval.hpp"

#include "judgebench/error.hpp"
#include "judgebench/io.hpp"
#include "judgebench/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace judgebench::retrieval {

std::vector<double> l2_normalize(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) {
            x /= norm;
        }
    }
    return v;
}

PairIndex build_index(std::string judge_id, std::vector<IndexEntry> entries) {
    if (entries.empty()) {
        throw PreconditionError("build_index: no entries");
    }
    PairIndex index;
    index.judge_id = std::move(judge_id);
    index.dimension = entries.front().vector.size();
    if (index.dimension == 0) {
        throw DataError("build_index: vectors must have positive dimension");
    }
    std::set<std::string> ids;
    for (auto& entry : entries) {
        if (entry.vector.size() != index.dimension) {
            throw DataError("build_index: vector for " + entry.pair_id + " has dimension " +
                            std::to_string(entry.vector.size()) + ", expected " + std::to_string(index.dimension));
        }
        if (!ids.insert(entry.pair_id).second) {
            throw DataError("build_index: duplicate pair id " + entry.pair_id);
        }
        entry.vector = l2_normalize(std::move(entry.vector));
    }
    index.entries = std::move(entries);
    return index;
}

PairIndex build_index(const std::vector<qa::InstructionPair>& pairs, const Embedder& embed) {
    if (pairs.empty()) {
        throw PreconditionError("build_index: no pairs");
    }
    const std::string& judge = pairs.front().judge_id;
    std::vector<IndexEntry> entries;
    entries.reserve(pairs.size());
    for (const auto& pair : pairs) {
        if (pair.judge_id != judge) {
            throw PreconditionError("build_index: pairs from judges " + judge + " and " + pair.judge_id +
                                    " cannot share an index");
        }
        entries.push_back({pair.id(), embed(pair.question)});
    }
    return build_index(judge, std::move(entries));
}

std::vector<Hit> query(const PairIndex& index, std::span<const double> question_vector, std::size_t k) {
    if (k < 1 || k > index.entries.size()) {
        throw PreconditionError("query: k must lie in [1, " + std::to_string(index.entries.size()) + "]");
    }
    if (question_vector.size() != index.dimension) {
        throw PreconditionError("query: vector dimension mismatch");
    }
    const auto unit = l2_normalize(std::vector<double>(question_vector.begin(), question_vector.end()));
    std::vector<Hit> hits;
    hits.reserve(index.entries.size());
    for (const auto& entry : index.entries) {
        double dot = 0.0;
        for (std::size_t i = 0; i < unit.size(); ++i) {
            dot += unit[i] * entry.vector[i];
        }
        hits.push_back({entry.pair_id, dot});
    }
    const auto better = [](const Hit& a, const Hit& b) {
        return a.score != b.score ? a.score > b.score : a.pair_id < b.pair_id;
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
    hits.resize(k);
    return hits;
}

std::vector<Hit> query(const PairIndex& index, std::string_view question, const Embedder& embed, std::size_t k) {
    const auto vector = embed(question);
    return query(index, std::span<const double>(vector), k);
}

RagPrompt build_rag_prompt(std::string_view question, const std::vector<qa::InstructionPair>& retrieved,
                           std::string_view template_text) {
    const auto examples_at = template_text.find(kExamplesPlaceholder);
    const auto question_at = template_text.find(kQuestionPlaceholder);
    if (examples_at == std::string_view::npos || question_at == std::string_view::npos) {
        throw PreconditionError("build_rag_prompt: template needs both {examples} and {question}");
    }
    std::string examples;
    for (const auto& pair : retrieved) {
        examples += "שאלה: " + pair.question + "\nתשובה: " + pair.answer + "\n\n";
    }
    std::string out;
    std::size_t cursor = 0;
    while (cursor < template_text.size()) {
        const auto next_examples = template_text.find(kExamplesPlaceholder, cursor);
        const auto next_question = template_text.find(kQuestionPlaceholder, cursor);
        const auto next = std::min(next_examples, next_question);
        if (next == std::string_view::npos) {
            out.append(template_text.substr(cursor));
            break;
        }
        out.append(template_text.substr(cursor, next - cursor));
        if (next == next_examples) {
            out += examples;
            cursor = next + kExamplesPlaceholder.size();
        } else {
            out.append(question);
            cursor = next + kQuestionPlaceholder.size();
        }
    }
    RagPrompt prompt;
    prompt.length = text::code_points(out).size();
    prompt.text = std::move(out);
    return prompt;
}

std::string index_to_jsonl(const PairIndex& index) {
    std::string out;
    for (const auto& entry : index.entries) {
        out += nlohmann::json{{"pair_id", entry.pair_id}, {"vector", entry.vector}}.dump();
        out.push_back('\n');
    }
    return out;
}

PairIndex load_index(const std::filesystem::path& path, std::string judge_id) {
    std::vector<IndexEntry> entries;
    io::for_each_jsonl(path, [&](std::size_t line, const nlohmann::json& obj) {
        IndexEntry entry;
        entry.pair_id = io::require_string(obj, "pair_id", line);
        if (!obj.contains("vector") || !obj["vector"].is_array()) {
            throw DataError("line " + std::to_string(line) + ": missing field vector");
        }
        obj["vector"].get_to(entry.vector);
        entries.push_back(std::move(entry));
    });
    return build_index(std::move(judge_id), std::move(entries));
}

} // namespace judgebench::retrieval
