#include "judgebench/error.hpp"
#include "judgebench/llm_gateway.hpp"
#include "judgebench/prompts.hpp"
#include "judgebench/retrieval.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace judgebench;

namespace {

qa::InstructionPair pair(std::string judge, int idx, std::string question) {
    qa::InstructionPair p;
    p.judge_id = std::move(judge);
    p.case_id = "c";
    p.sentence_idx = idx;
    p.question = std::move(question);
    p.answer = "answer " + std::to_string(idx);
    return p;
}

std::vector<qa::InstructionPair> five_pairs() {
    std::vector<qa::InstructionPair> pairs;
    for (int i = 0; i < 5; ++i) {
        pairs.push_back(pair("j", i, "question number " + std::to_string(i) + " about topic " + std::string(i + 1, 'x')));
    }
    return pairs;
}

retrieval::Embedder gateway_embedder(llm::Gateway& gateway) {
    return [&gateway](std::string_view text) { return gateway.embed_text(text); };
}

} // namespace

TEST_SUITE("retrieval") {

TEST_CASE("index holds one entry per pair") {
    auto mock = std::make_shared<llm::MockTransport>();
    llm::Gateway gateway(mock, {});
    const auto index = retrieval::build_index(five_pairs(), gateway_embedder(gateway));
    CHECK(index.judge_id == "j");
    REQUIRE(index.entries.size() == 5);
    CHECK(index.entries[2].pair_id == "c#2");
    for (const auto& entry : index.entries) {
        CHECK(entry.vector.size() == index.dimension);
    }
}

TEST_CASE("index preconditions") {
    auto embed = [](std::string_view) { return std::vector<double>{1.0, 0.0}; };
    auto pairs = five_pairs();
    pairs.push_back(pair("other", 9, "q"));
    CHECK_THROWS_AS((void)retrieval::build_index(pairs, embed), PreconditionError);
    CHECK_THROWS_AS((void)retrieval::build_index({}, embed), PreconditionError);
    CHECK_THROWS_AS((void)retrieval::build_index("j", {{"a", {1.0}}, {"a", {0.5}}}), DataError);
    CHECK_THROWS_AS((void)retrieval::build_index("j", {{"a", {1.0}}, {"b", {0.5, 0.5}}}), DataError);
}

TEST_CASE("warm cache rebuild yields identical vectors") {
    jbtest::TempDir dir("ret");
    llm::GatewayConfig config;
    config.cache_dir = dir.path();
    auto mock = std::make_shared<llm::MockTransport>();
    llm::Gateway first(mock, config);
    const auto a = retrieval::build_index(five_pairs(), gateway_embedder(first));
    const auto calls = mock->calls();
    llm::Gateway second(mock, config);
    const auto b = retrieval::build_index(five_pairs(), gateway_embedder(second));
    CHECK(mock->calls() == calls);
    CHECK(retrieval::index_to_jsonl(a) == retrieval::index_to_jsonl(b));
}

TEST_CASE("self query ranks the pair first with score 1") {
    auto mock = std::make_shared<llm::MockTransport>();
    llm::Gateway gateway(mock, {});
    const auto embed = gateway_embedder(gateway);
    const auto pairs = five_pairs();
    const auto index = retrieval::build_index(pairs, embed);
    const auto hits = retrieval::query(index, pairs[3].question, embed, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].pair_id == "c#3");
    CHECK(hits[0].score == doctest::Approx(1.0));
}

TEST_CASE("planted orthogonal vectors") {
    const auto index = retrieval::build_index("j", {{"p1", {1, 0, 0}}, {"p2", {0, 1, 0}}, {"p3", {0, 0, 1}}});
    const std::vector<double> q{0, 1, 0};
    const auto hits = retrieval::query(index, q, 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0] == retrieval::Hit{"p2", 1.0});

    // k = size returns everything, ties broken by id
    const auto all = retrieval::query(index, q, 3);
    REQUIRE(all.size() == 3);
    CHECK(all[0].pair_id == "p2");
    CHECK(all[1].pair_id == "p1");
    CHECK(all[2].pair_id == "p3");
}

TEST_CASE("k must be within range and scaling the query changes nothing") {
    const auto index = retrieval::build_index("j", {{"a", {3, 4}}, {"b", {1, 0}}});
    const std::vector<double> q{1, 1};
    CHECK_THROWS_AS((void)retrieval::query(index, q, 0), PreconditionError);
    CHECK_THROWS_AS((void)retrieval::query(index, q, 3), PreconditionError);
    const std::vector<double> wrong{1, 1, 1};
    CHECK_THROWS_AS((void)retrieval::query(index, wrong, 1), PreconditionError);
    const std::vector<double> scaled{250, 250};
    CHECK(retrieval::query(index, q, 2) == retrieval::query(index, scaled, 2));
    CHECK(index.entries[0].vector[0] == doctest::Approx(0.6));
}

TEST_CASE("l2 normalize keeps zero vectors") {
    CHECK(retrieval::l2_normalize({0, 0}) == std::vector<double>{0, 0});
    const auto v = retrieval::l2_normalize({3, 4});
    CHECK(v[1] == doctest::Approx(0.8));
}

TEST_CASE("rag prompt assembly") {
    const std::string_view tmpl = "EX:\n{examples}Q: {question}";
    const auto empty = retrieval::build_rag_prompt("מה?", {}, tmpl);
    CHECK(empty.text == "EX:\nQ: מה?");
    CHECK(empty.length == 10);

    const std::vector<qa::InstructionPair> hits{pair("j", 2, "second"), pair("j", 0, "zeroth"), pair("j", 1, "first")};
    const auto filled = retrieval::build_rag_prompt("q", hits, tmpl);
    const auto a = filled.text.find("second");
    const auto b = filled.text.find("zeroth");
    const auto c = filled.text.find("first");
    CHECK(a < b);
    CHECK(b < c);
    CHECK(c < filled.text.find("Q: q"));
    std::size_t blocks = 0;
    for (auto at = filled.text.find("שאלה: "); at != std::string::npos; at = filled.text.find("שאלה: ", at + 1)) {
        ++blocks;
    }
    CHECK(blocks == 3);

    CHECK_THROWS_AS((void)retrieval::build_rag_prompt("q", {}, "no placeholders"), PreconditionError);
    CHECK_THROWS_AS((void)retrieval::build_rag_prompt("q", {}, "{examples} only"), PreconditionError);
    CHECK_NOTHROW((void)retrieval::build_rag_prompt("q", hits, prompts::rag_template()));
}

TEST_CASE("default k presets") {
    CHECK(std::size(retrieval::kDefaultKValues) == 2);
    CHECK(retrieval::kDefaultKValues[0] == 3);
    CHECK(retrieval::kDefaultKValues[1] == 5);
}

TEST_CASE("index jsonl round trip") {
    jbtest::TempDir dir("idx");
    const auto index = retrieval::build_index("j", {{"a", {0.25, 1}}, {"b", {1, 0}}});
    jbtest::write_text(dir / "i.jsonl", retrieval::index_to_jsonl(index));
    const auto back = retrieval::load_index(dir / "i.jsonl", "j");
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].vector == index.entries[0].vector);
    CHECK(back.dimension == 2);
}

}
