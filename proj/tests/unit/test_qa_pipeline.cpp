#include "judgebench/error.hpp"
#include "judgebench/prompts.hpp"
#include "judgebench/qa_pipeline.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace judgebench;
using nlohmann::json;

namespace {

const char* kStep1 = "אנליסט משפטי";
const char* kStep2 = "השב **כן**";
const char* kStep3 = "seasoned Israeli jurist";
const char* kStep4 = "בודק-איכות";

json rule(const char* system, std::string user, json responses) {
    json r = {{"system_contains", system}, {"responses", std::move(responses)}};
    if (!user.empty()) {
        r["user_contains"] = std::move(user);
    }
    return r;
}

llm::GatewayConfig config(const std::filesystem::path& cache = {}) {
    llm::GatewayConfig c;
    c.cache_dir = cache;
    c.retry.max_retries = 0;
    return c;
}

corpus::VerdictDoc doc(std::string case_id, std::string text) { return {"j1", std::move(case_id), std::move(text), {}}; }

const std::string kText = "רקע עובדתי. נימוק ראשון. נימוק שני. תיאור הליך.";

} // namespace

TEST_SUITE("qa_pipeline") {

TEST_CASE("prompt assets are the four stage prompts") {
    CHECK(prompts::extract_reasoning().find(kStep1) != std::string_view::npos);
    CHECK(prompts::extract_reasoning().find("משפטים") != std::string_view::npos);
    CHECK(prompts::validate_reasoning().find(kStep2) != std::string_view::npos);
    CHECK(prompts::generate_question().find("25 words") != std::string_view::npos);
    CHECK(prompts::validate_pair().find(kStep4) != std::string_view::npos);
    CHECK(prompts::prompt_set_hash().size() == 64);
    CHECK(prompts::rag_template().find("{examples}") != std::string_view::npos);
}

TEST_CASE("sentence list parser") {
    using V = std::vector<std::string>;
    CHECK(qa::parse_sentence_list(R"({"משפטים": ["א", "ב"]})") == V{"א", "ב"});
    CHECK(qa::parse_sentence_list(R"(["x"])") == V{"x"});
    CHECK(qa::parse_sentence_list("```json\n{\"משפטים\": []}\n```") == V{});
    CHECK(qa::parse_sentence_list("Here you go: [\"a\", \"b\"] hope it helps") == V{"a", "b"});
    CHECK(qa::parse_sentence_list(R"({"sentences": ["z"]})") == V{"z"});
    CHECK_FALSE(qa::parse_sentence_list("no json at all").has_value());
    CHECK_FALSE(qa::parse_sentence_list("").has_value());
    CHECK_FALSE(qa::parse_sentence_list(R"([1, 2])").has_value());
}

TEST_CASE("numbered question parser") {
    auto q = qa::parse_numbered_question("1. מהו השיקול המרכזי?");
    REQUIRE(q);
    CHECK(q->question == "מהו השיקול המרכזי?");
    CHECK_FALSE(q->multiple_lines);

    q = qa::parse_numbered_question("Sure!\n2) first?\n3. second?");
    REQUIRE(q);
    CHECK(q->question == "first?");
    CHECK(q->multiple_lines);

    CHECK_FALSE(qa::parse_numbered_question("").has_value());
    CHECK_FALSE(qa::parse_numbered_question("no numbering here").has_value());
}

TEST_CASE("step 1 extraction") {
    auto mock = std::make_shared<llm::MockTransport>(json{{"chat",
                                                          {rule(kStep1, "two", {R"(["נימוק ראשון.", "נימוק שני."])"}),
                                                           rule(kStep1, "none", {R"({"משפטים": []})"}),
                                                           rule(kStep1, "prose", {"I cannot comply", "still prose"}),
                                                           rule(kStep1, "late", {"oops", R"(["x"])"})}}});
    llm::Gateway gateway(mock, config());
    qa::QaPipeline pipeline(gateway);

    const auto two = pipeline.extract_reasoning(doc("c", "two"));
    REQUIRE(two.size() == 2);
    CHECK(two[1].sentence_idx == 1);
    CHECK(two[0].extraction_model == "gpt-4.1-mini");
    CHECK(pipeline.extract_reasoning(doc("c", "none")).empty());
    CHECK_THROWS_AS((void)pipeline.extract_reasoning(doc("c", "prose")), qa::StageError);
    CHECK(pipeline.extract_reasoning(doc("c", "late")).size() == 1);
}

TEST_CASE("step 2 validation maps anything but the affirmative token to false") {
    auto mock = std::make_shared<llm::MockTransport>(json{{"chat",
                                                          {rule(kStep2, "yes", {"כן"}),
                                                           rule(kStep2, "dot", {" כן.\n"}),
                                                           rule(kStep2, "no", {"לא"}),
                                                           rule(kStep2, "junk", {"אולי, תלוי"}),
                                                           rule(kStep2, "blank", {"", "כן"}),
                                                           rule(kStep2, "void", {""})}}});
    llm::Gateway gateway(mock, config());
    qa::QaPipeline pipeline(gateway);
    auto s = [](std::string text) { return qa::ReasoningSentence{"j", "c", std::move(text), 0, "m"}; };
    CHECK(pipeline.validate_reasoning(s("yes")));
    CHECK(pipeline.validate_reasoning(s("dot")));
    CHECK_FALSE(pipeline.validate_reasoning(s("no")));
    CHECK_FALSE(pipeline.validate_reasoning(s("junk")));
    CHECK(pipeline.validate_reasoning(s("blank")));
    CHECK_FALSE(pipeline.validate_reasoning(s("void")));
}

TEST_CASE("step 3 question generation") {
    auto mock = std::make_shared<llm::MockTransport>(json{{"chat",
                                                          {rule(kStep3, "plain", {"1. מהו השיקול המרכזי?"}),
                                                           rule(kStep3, "multi", {"1. first?\n2. second?"}),
                                                           rule(kStep3, "empty", {""})}}});
    llm::Gateway gateway(mock, config());
    qa::QaPipeline pipeline(gateway);
    auto s = [](std::string text) { return qa::ReasoningSentence{"j", "c", std::move(text), 0, "m"}; };

    std::vector<qa::StageEvent> log;
    CHECK(pipeline.generate_question(s("plain"), 1, &log) == "מהו השיקול המרכזי?");
    CHECK(log.back().verdict == "ok");

    log.clear();
    CHECK(pipeline.generate_question(s("multi"), 1, &log) == "first?");
    CHECK(log.front().verdict == "warn_multiline");

    log.clear();
    const auto before = mock->calls();
    CHECK_FALSE(pipeline.generate_question(s("empty"), 1, &log).has_value());
    CHECK(mock->calls() - before == 2);
    CHECK(log.size() == 2);
}

TEST_CASE("step 4 validation retries once with a fresh question") {
    auto mock = std::make_shared<llm::MockTransport>(
        json{{"chat",
              {rule(kStep1, "", {R"(["נימוק ראשון.", "נימוק שני."])"}),
               rule(kStep2, "", {"כן"}),
               rule(kStep3, "", {"1. שאלה?"}),
               rule(kStep4, "נימוק ראשון", {"0", "1"}),
               rule(kStep4, "נימוק שני", {"0", "0"})}}});
    llm::Gateway gateway(mock, config());
    qa::QaPipeline pipeline(gateway);
    const auto result = pipeline.run({doc("c1", kText)});
    REQUIRE(result.pairs.size() == 1);
    const auto& pair = result.pairs[0];
    CHECK(pair.answer == "נימוק ראשון.");
    CHECK(pair.stage_log.back() == qa::StageEvent{"validate_pair", "accept", 2});
    CHECK(result.report.totals.discarded == 1);
    CHECK(result.report.totals.pairs_valid == 1);
    CHECK(result.report.totals.questions_generated == 2);
}

TEST_CASE("step 4 accepts on 1 and rejects non-binary output") {
    auto mock = std::make_shared<llm::MockTransport>(
        json{{"chat", {rule(kStep4, "good", {"1"}), rule(kStep4, "bad", {"כן"})}}});
    llm::Gateway gateway(mock, config());
    qa::QaPipeline pipeline(gateway);
    CHECK(pipeline.validate_pair("q", "good"));
    CHECK_FALSE(pipeline.validate_pair("q", "bad"));
}

TEST_CASE("end to end counts for one document") {
    jbtest::TempDir dir("qa");
    const json script = {{"chat",
                          {rule(kStep1, "", {R"(["נימוק ראשון.", "נימוק שני.", "תיאור הליך."])"}),
                           rule(kStep2, "תיאור הליך", {"לא"}),
                           rule(kStep2, "", {"כן"}),
                           rule(kStep3, "", {"1. מה נקבע?"}),
                           rule(kStep4, "", {"1"})}}};
    auto mock = std::make_shared<llm::MockTransport>(script);
    llm::Gateway gateway(mock, config(dir.path()));
    qa::QaPipeline pipeline(gateway);
    const auto first = pipeline.run({doc("c1", kText)});
    const auto& t = first.report.totals;
    CHECK(t.extracted == 3);
    CHECK(t.reasoning_valid == 2);
    CHECK(t.questions_generated == 2);
    CHECK(t.pairs_valid == 2);
    CHECK(t.discarded == 0);
    CHECK(first.report.per_judge.at("j1") == t);
    for (const auto& pair : first.pairs) {
        CHECK(pair.prompt_hash == prompts::prompt_set_hash());
        CHECK(kText.find(pair.answer) != std::string::npos);
    }

    // warm cache: no network, identical bytes
    auto silent = std::make_shared<llm::MockTransport>(json::object());
    llm::Gateway warm(silent, config(dir.path()));
    qa::QaPipeline again(warm);
    const auto second = again.run({doc("c1", kText)});
    CHECK(silent->calls() == 0);
    CHECK(qa::pairs_to_jsonl(second.pairs) == qa::pairs_to_jsonl(first.pairs));
}

TEST_CASE("non-verbatim sentences and failing documents") {
    auto mock = std::make_shared<llm::MockTransport>(
        json{{"chat",
              {rule(kStep1, "broken", {"not json", "still not json"}),
               rule(kStep1, "", {R"(["נימוק ראשון.", "משפט מומצא."])"}),
               rule(kStep2, "", {"כן"}),
               rule(kStep3, "", {"1. q?"}),
               rule(kStep4, "", {"1"})}}});
    llm::Gateway gateway(mock, config());
    qa::QaPipeline pipeline(gateway);
    const auto result = pipeline.run({doc("c1", kText), doc("c2", "broken doc text")});
    CHECK(result.report.totals.non_verbatim == 1);
    CHECK(result.report.totals.docs_skipped == 1);
    CHECK(result.report.totals.docs_processed == 1);
    REQUIRE(result.report.errors.size() == 1);
    CHECK(result.report.errors[0].rfind("c2:", 0) == 0);
    CHECK(result.pairs.size() == 1);
}

TEST_CASE("empty corpus gives an empty, zeroed report") {
    auto mock = std::make_shared<llm::MockTransport>();
    llm::Gateway gateway(mock, config());
    qa::QaPipeline pipeline(gateway);
    const auto result = pipeline.run({});
    CHECK(result.pairs.empty());
    CHECK(result.report.totals == qa::StageCounts{});
}

TEST_CASE("parallel workers do not change the output") {
    const json script = {{"chat",
                          {rule(kStep1, "", {R"(["נימוק ראשון.", "נימוק שני."])"}),
                           rule(kStep2, "", {"כן"}),
                           rule(kStep3, "", {"1. q?"}),
                           rule(kStep4, "", {"1"})}}};
    std::vector<corpus::VerdictDoc> docs;
    for (int i = 0; i < 12; ++i) {
        docs.push_back(doc("case" + std::to_string(i), kText + " " + std::to_string(i)));
    }
    auto run_with = [&](std::size_t workers) {
        auto mock = std::make_shared<llm::MockTransport>(script);
        llm::Gateway gateway(mock, config());
        qa::PipelineConfig pc;
        pc.workers = workers;
        qa::QaPipeline pipeline(gateway, pc);
        return pipeline.run(docs);
    };
    const auto serial = run_with(1);
    const auto parallel = run_with(4);
    CHECK(serial.pairs.size() == 24);
    CHECK(qa::pairs_to_jsonl(serial.pairs) == qa::pairs_to_jsonl(parallel.pairs));
    CHECK(serial.report.totals == parallel.report.totals);
}

TEST_CASE("pair jsonl round trip") {
    jbtest::TempDir dir("pairs");
    qa::InstructionPair p{"j", "c", 3, "q?", "a.", {{"extract", "ok", 1}}, "hash"};
    CHECK(p.id() == "c#3");
    jbtest::write_text(dir / "p.jsonl", qa::pairs_to_jsonl({p}));
    const auto back = qa::read_pairs_jsonl(dir / "p.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0].stage_log == p.stage_log);
    CHECK(back[0].question == "q?");
    const json j = p;
    for (const char* key : {"judge_id", "case_id", "question", "answer", "stage_log", "prompt_hash"}) {
        CHECK(j.contains(key));
    }
}

}
