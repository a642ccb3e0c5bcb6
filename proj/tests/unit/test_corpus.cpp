#include "judgebench/corpus.hpp"
#include "judgebench/error.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace judgebench;

namespace {

std::vector<corpus::VerdictDoc> docs_for(const std::string& judge, int n) {
    std::vector<corpus::VerdictDoc> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({judge, judge + "-" + std::to_string(i), "text " + std::to_string(i), std::nullopt});
    }
    return out;
}

std::string words(int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
        s += (i ? " " : "") + std::string("w") + std::to_string(i);
    }
    return s;
}

} // namespace

TEST_SUITE("corpus") {

TEST_CASE("load_corpus counts, normalizes and reports bad lines") {
    jbtest::TempDir dir("corpus");
    jbtest::write_text(dir / "two.jsonl",
                       "{\"judge_id\":\"a\",\"case_id\":\"1\",\"text\":\"cafe\\u0301 \\r\\n\",\"date\":\"2020-01-01\"}\n"
                       "{\"judge_id\":\"a\",\"case_id\":\"2\",\"text\":\"x\"}\n");
    const auto docs = corpus::load_corpus(dir / "two.jsonl");
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].text == "caf\xC3\xA9");
    CHECK(docs[0].date == "2020-01-01");
    CHECK_FALSE(docs[1].date.has_value());

    jbtest::write_text(dir / "empty.jsonl", "");
    CHECK(corpus::load_corpus(dir / "empty.jsonl").empty());

    jbtest::write_text(dir / "bad.jsonl",
                       "{\"judge_id\":\"a\",\"case_id\":\"1\",\"text\":\"x\"}\n"
                       "{\"judge_id\":\"a\",\"case_id\":\"2\",\"text\":\"y\"}\n"
                       "{\"judge_id\":\"a\",\"case_id\":\"3\"}\n");
    CHECK_THROWS_WITH_AS((void)corpus::load_corpus(dir / "bad.jsonl"), doctest::Contains("line 3: missing field text"),
                         DataError);

    jbtest::write_text(dir / "dup.jsonl",
                       "{\"judge_id\":\"a\",\"case_id\":\"1\",\"text\":\"x\"}\n"
                       "{\"judge_id\":\"a\",\"case_id\":\"1\",\"text\":\"y\"}\n");
    CHECK_THROWS_AS((void)corpus::load_corpus(dir / "dup.jsonl"), DataError);

    jbtest::write_text(dir / "blank.jsonl", "{\"judge_id\":\"a\",\"case_id\":\"1\",\"text\":\"   \"}\n");
    CHECK_THROWS_AS((void)corpus::load_corpus(dir / "blank.jsonl"), DataError);
}

TEST_CASE("filter_judges keeps judges at or above the threshold") {
    auto docs = docs_for("A", 120);
    const auto b = docs_for("B", 50);
    docs.insert(docs.end(), b.begin(), b.end());

    const auto result = corpus::filter_judges(docs);
    CHECK(result.kept.size() == 120);
    CHECK(std::all_of(result.kept.begin(), result.kept.end(), [](const auto& d) { return d.judge_id == "A"; }));
    REQUIRE(result.profiles.size() == 2);
    CHECK(result.profiles[0].judge_id == "A");
    CHECK(result.profiles[0].doc_count == 120);
    CHECK(result.profiles[1].doc_count == 50);
    CHECK(result.profiles[1].token_count == 100);

    CHECK(corpus::filter_judges(docs, 1).kept.size() == 170);
    CHECK(corpus::kDefaultMinDocs == 100);
    // idempotent
    CHECK(corpus::filter_judges(result.kept).kept.size() == 120);
    CHECK_THROWS_AS((void)corpus::filter_judges(docs, 0), PreconditionError);
}

TEST_CASE("split_per_judge is deterministic and disjoint") {
    std::vector<corpus::SplitItem> items;
    for (int i = 0; i < 10; ++i) {
        items.push_back({"j", "item" + std::to_string(i)});
    }
    const auto a = corpus::split_per_judge(items, 0.2, 7);
    REQUIRE(a.size() == 1);
    CHECK(a[0].train.size() == 8);
    CHECK(a[0].test.size() == 2);
    std::vector<std::string> both;
    std::set_intersection(a[0].train.begin(), a[0].train.end(), a[0].test.begin(), a[0].test.end(),
                          std::back_inserter(both));
    CHECK(both.empty());

    auto shuffled = items;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(corpus::split_per_judge(shuffled, 0.2, 7) == a);
    CHECK(nlohmann::json(corpus::split_per_judge(items, 0.2, 7)).dump() == nlohmann::json(a).dump());
    CHECK(corpus::split_per_judge(items, 0.2, 8) != a);

    CHECK_THROWS_AS((void)corpus::split_per_judge({{"solo", "x"}}, 0.2, 7), DataError);
    CHECK_THROWS_AS((void)corpus::split_per_judge(items, 0.0, 7), PreconditionError);
    CHECK_THROWS_AS((void)corpus::split_per_judge(items, 1.0, 7), PreconditionError);
}

TEST_CASE("split json round trip") {
    corpus::DatasetSplit s{"j", {"a", "b"}, {"c"}, 3, 0.5};
    const nlohmann::json j = s;
    CHECK(j.at("fraction") == 0.5);
    CHECK(j.get<corpus::DatasetSplit>() == s);
}

TEST_CASE("subsample_train takes ceil(f * n) nested items") {
    corpus::DatasetSplit split;
    split.judge_id = "j";
    for (int i = 0; i < 3000; ++i) {
        split.train.push_back("t" + std::to_string(i));
    }
    std::sort(split.train.begin(), split.train.end());
    split.test = {"x", "y"};

    const auto half = corpus::subsample_train(split, 0.5, 11);
    CHECK(half.train.size() == 1500);
    CHECK(half.test == split.test);
    CHECK(half.fraction == doctest::Approx(0.5));
    CHECK(corpus::subsample_train(split, 1.0, 11).train == split.train);

    std::vector<std::string> prev;
    for (double f : corpus::kDefaultAblationFractions) {
        const auto sub = corpus::subsample_train(split, f, 11);
        CHECK(sub.train.size() == static_cast<std::size_t>(3000 * f));
        CHECK(std::includes(sub.train.begin(), sub.train.end(), prev.begin(), prev.end()));
        prev = sub.train;
    }
    CHECK_THROWS_AS((void)corpus::subsample_train(split, 0.0, 1), PreconditionError);
    CHECK_THROWS_AS((void)corpus::subsample_train(split, 1.5, 1), PreconditionError);
    CHECK(corpus::fractional_count(0.3, 10) == 3); // 0.3 * 10 is 3.0000000000000004
    CHECK(corpus::fractional_count(0.01, 10) == 1);
}

TEST_CASE("prefix task covers ceil(f * N) whitespace tokens") {
    corpus::VerdictDoc doc{"j", "c", words(20), std::nullopt};
    auto task = corpus::make_prefix_task(doc);
    CHECK(task.prefix == "w0 w1 w2");
    CHECK(task.prefix + task.continuation_reference == doc.text);
    CHECK(task.fraction == doctest::Approx(0.15));

    doc.text = words(10);
    task = corpus::make_prefix_task(doc, 0.15);
    CHECK(task.prefix == "w0 w1");
    CHECK(task.continuation_reference == " w2 w3 w4 w5 w6 w7 w8 w9");

    doc.text = "multi\n  spaced\ttext here";
    task = corpus::make_prefix_task(doc, 0.5);
    CHECK(task.prefix + task.continuation_reference == doc.text);
    CHECK(task.prefix == "multi\n  spaced");

    doc.text = "two words";
    CHECK_THROWS_AS((void)corpus::make_prefix_task(doc, 0.99), PreconditionError);
    doc.text = "one";
    CHECK_THROWS_AS((void)corpus::make_prefix_task(doc), PreconditionError);
}

}
