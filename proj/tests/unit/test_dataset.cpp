#include <doctest.h>

#include <set>
#include <sstream>

#include "mstage/dataset.hpp"
#include "mstage/error.hpp"
#include "support/test_support.hpp"

using namespace mstage;
using testing_support::fixture;
using testing_support::TempDir;

namespace {

Corpus parse(const std::string& text, CorpusFormat f = CorpusFormat::line_records) {
  std::istringstream in(text);
  return parse_corpus(in, f, "inline");
}

std::string record(const std::string& id, const char* gold = "\"A\"") {
  return R"({"id":")" + id + R"(","question":"q","options":["a","b","c","d"],"gold":)" + gold +
         "}\n";
}

Corpus numbered(std::size_t n) {
  std::vector<MCQItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    MCQItem it;
    it.id = "i" + std::to_string(i);
    it.question = "q";
    it.options = {"a", "b", "c", "d"};
    items.push_back(it);
  }
  return Corpus(std::move(items), "generated");
}

std::set<std::string> ids(const Corpus& c) {
  std::set<std::string> out;
  for (const auto& it : c) out.insert(it.id);
  return out;
}

}  // namespace

TEST_CASE("labels") {
  CHECK(parse_label("A") == OptionLabel::A);
  CHECK(parse_label("D") == OptionLabel::D);
  CHECK_FALSE(parse_label("E"));
  CHECK_FALSE(parse_label("a"));
  CHECK_FALSE(parse_label(""));
  CHECK(to_char(OptionLabel::C) == 'C');
  CHECK(OptionLabel::A < OptionLabel::B);
  CHECK(kAllLabels.size() == 4);
}

TEST_CASE("empty input yields an empty corpus") {
  const Corpus c = parse("");
  CHECK(c.empty());
  CHECK(c.metadata().split_counts.empty());
  CHECK(c.metadata().unlabeled == 0);
  CHECK(parse("  \n", CorpusFormat::task_native).empty());
}

TEST_CASE("six-item fixture loads as q1..q6") {
  const Corpus c = load_corpus(fixture("tiny/corpus.jsonl"), CorpusFormat::line_records);
  REQUIRE(c.size() == 6);
  CHECK(ids(c) == std::set<std::string>{"q1", "q2", "q3", "q4", "q5", "q6"});
  CHECK(c.items().front().id == "q1");
  CHECK(c.metadata().split_counts.at(Split::validation) == 6);
  CHECK(c.at("q5").option(OptionLabel::B) == "有节奏有旋律");
}

TEST_CASE("reloading is byte-stable") {
  TempDir tmp("dataset");
  const Corpus a = load_corpus(fixture("replay/corpus.jsonl"), CorpusFormat::line_records);
  write_corpus(tmp / "a.jsonl", a);
  const Corpus b = load_corpus(tmp / "a.jsonl", CorpusFormat::line_records);
  write_corpus(tmp / "b.jsonl", b);
  CHECK(testing_support::slurp(tmp / "a.jsonl") == testing_support::slurp(tmp / "b.jsonl"));
}

TEST_CASE("malformed records report their line") {
  const std::string text = record("a") + "\n" + "{not json}\n";
  try {
    parse(text);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.record() == 3);
    CHECK(e.stage() == "dataset");
  }
  CHECK_THROWS_AS(parse(R"({"id":"x","question":"q","options":["a","b","c"]})"), FormatError);
  CHECK_THROWS_AS(parse(R"({"id":"x","question":"q","options":["a","b","c","d","e"]})"),
                  FormatError);
  CHECK_THROWS_AS(parse(R"({"id":"x","question":"q","options":["a","","c","d"]})"), FormatError);
  CHECK_THROWS_AS(parse(R"({"id":"x","question":" ","options":["a","b","c","d"]})"), FormatError);
  CHECK_THROWS_AS(parse(record("x", "\"E\"")), FormatError);
}

TEST_CASE("duplicate ids are rejected") {
  CHECK_THROWS_AS(parse(record("a") + record("b") + record("a")), ValidationError);
}

TEST_CASE("unlabeled items are accepted and counted") {
  const Corpus c = parse(record("a") + record("b", "null") +
                         R"({"id":"c","question":"q","options":["a","b","c","d"],"split":"test"})" +
                         "\n");
  CHECK(c.size() == 3);
  CHECK(c.metadata().unlabeled == 2);
  CHECK(c.metadata().split_counts.at(Split::test) == 1);
}

TEST_CASE("task-native adapter") {
  SUBCASE("array with per-option keys and markers") {
    const Corpus c = parse(R"([
      {"index": 7, "sentence": "闪电像火蛇", "A": "A. 闪电", "B": "(B) 火蛇", "C": "C、天空", "D": "雷声", "answer": "B"},
      {"id": "x2", "question": "月亮像银盘", "option_A": "月亮", "option_B": "银盘", "option_C": "圆", "option_D": "亮"}
    ])",
                           CorpusFormat::task_native);
    REQUIRE(c.size() == 2);
    CHECK(c.items()[0].id == "7");
    CHECK(c.items()[0].option(OptionLabel::A) == "闪电");
    CHECK(c.items()[0].option(OptionLabel::B) == "火蛇");
    CHECK(c.items()[0].option(OptionLabel::C) == "天空");
    CHECK(c.items()[0].gold == OptionLabel::B);
    CHECK_FALSE(c.items()[1].gold);
  }
  SUBCASE("line-delimited with a choices array") {
    const Corpus c = parse(R"({"qid":"a","context":"s","choices":["w","x","y","z"],"label":"D"})",
                           CorpusFormat::task_native);
    CHECK(c.at("a").gold == OptionLabel::D);
  }
  SUBCASE("three options is an error") {
    CHECK_THROWS_AS(parse(R"([{"id":"a","question":"s","A":"1","B":"2","C":"3"}])",
                          CorpusFormat::task_native),
                    FormatError);
  }
}

TEST_CASE("split sizes") {
  auto check = [](std::size_t n, double f, std::uint64_t seed, std::size_t want_train) {
    const Corpus c = numbered(n);
    auto [train, rest] = split_corpus(c, f, seed);
    CHECK(train.size() == want_train);
    CHECK(train.size() + rest.size() == n);
    auto a = ids(train), b = ids(rest);
    for (const auto& id : a) CHECK_FALSE(b.count(id));
    a.insert(b.begin(), b.end());
    CHECK(a == ids(c));
  };
  check(500, 0.8, 7, 400);
  check(10, 0.8, 0, 8);
  check(10, 0.8, 12345, 8);
  check(100, 0.29, 3, 29);
  check(7, 0.5, 1, 3);
}

TEST_CASE("split is deterministic and order-preserving") {
  const Corpus c = numbered(50);
  auto [t1, r1] = split_corpus(c, 0.8, 42);
  auto [t2, r2] = split_corpus(c, 0.8, 42);
  CHECK(ids(t1) == ids(t2));
  auto [t3, r3] = split_corpus(c, 0.8, 43);
  CHECK(ids(t1) != ids(t3));
  // Members keep corpus order.
  std::size_t last = 0;
  for (const auto& it : t1) {
    const std::size_t n = std::stoul(it.id.substr(1));
    CHECK(n >= last);
    last = n;
  }
}

TEST_CASE("split errors") {
  const Corpus c = numbered(5);
  CHECK_THROWS_AS(split_corpus(c, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(split_corpus(c, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(split_corpus(c, -0.5, 1), ValidationError);
  CHECK_THROWS_AS(split_corpus(Corpus{}, 0.5, 1), ValidationError);
}
