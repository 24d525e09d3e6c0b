#include <doctest.h>

#include <random>

#include "mstage/error.hpp"
#include "mstage/evaluator.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace mstage;
using namespace testing_support;

namespace {

MCQItem item(const std::string& id, std::optional<OptionLabel> gold) {
  MCQItem it;
  it.id = id;
  it.question = "问题" + id;
  it.options = {"甲", "乙", "丙", "丁"};
  it.gold = gold;
  return it;
}

Prediction pred(const std::string& id, std::optional<OptionLabel> p) {
  return Prediction{id, "full", p, PredictionSource::llm};
}

// Ten labeled items (7 right, 2 wrong, 1 unanswered) plus one without gold.
struct HandCount {
  Corpus corpus;
  std::vector<Prediction> preds;
};

HandCount hand_count() {
  using L = OptionLabel;
  const std::vector<L> gold = {L::A, L::B, L::C, L::D, L::A, L::B, L::C, L::D, L::A, L::B};
  std::vector<MCQItem> items;
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < 10; ++i) {
    const std::string id = "h" + std::to_string(i);
    items.push_back(item(id, gold[i]));
    if (i < 7) preds.push_back(pred(id, gold[i]));
    else if (i < 9) preds.push_back(pred(id, label_at((index_of(gold[i]) + 1) % 4)));
    else preds.push_back(pred(id, std::nullopt));
  }
  items.push_back(item("nogold", std::nullopt));
  preds.push_back(pred("nogold", OptionLabel::A));
  return {Corpus(items, "hand"), preds};
}

}  // namespace

TEST_CASE("hand-counted accuracy") {
  const auto h = hand_count();
  const auto r = accuracy(h.preds, h.corpus, "full");
  CHECK(r.counts == EvalCounts{7, 2, 1, 1});
  CHECK(r.accuracy == doctest::Approx(0.7).epsilon(1e-12));
  REQUIRE(r.rows.size() == 11);
  CHECK(r.rows[9].outcome == Outcome::unextracted);
  CHECK(r.rows[10].outcome == Outcome::skipped_no_gold);
  CHECK(r.mode == "full");

  // Accuracy recomputed from the rows.
  std::size_t correct = 0, scored = 0;
  for (const auto& row : r.rows) {
    if (!row.gold) continue;
    ++scored;
    correct += row.predicted == row.gold;
  }
  CHECK(r.accuracy == static_cast<double>(correct) / static_cast<double>(scored));

  CHECK(r.render_table().find("accuracy: 0.7000") != std::string::npos);
  const auto records = r.render_records();
  CHECK(std::count(records.begin(), records.end(), '\n') == 12);
  CHECK(records.find("\"summary\":true") != std::string::npos);
}

TEST_CASE("missing predictions count as unextracted") {
  auto h = hand_count();
  h.preds.erase(h.preds.begin() + 9);  // drop the unanswered one entirely
  const auto r = accuracy(h.preds, h.corpus);
  CHECK(r.counts == EvalCounts{7, 2, 1, 1});
}

TEST_CASE("all correct and degenerate cases") {
  std::vector<MCQItem> items;
  std::vector<Prediction> preds;
  for (int i = 0; i < 5; ++i) {
    items.push_back(item("a" + std::to_string(i), label_at(static_cast<std::size_t>(i % 4))));
    preds.push_back(pred(items.back().id, items.back().gold));
  }
  const Corpus corpus(items, "x");
  CHECK(accuracy(preds, corpus).accuracy == 1.0);

  const Corpus unlabeled({item("u", std::nullopt)}, "x");
  const auto r = accuracy(std::vector<Prediction>{}, unlabeled);
  CHECK(r.accuracy == 0.0);
  CHECK(r.counts.skipped_no_gold == 1);

  const std::vector<Prediction> stray = {pred("zzz", OptionLabel::A)};
  CHECK_THROWS_AS(accuracy(stray, corpus), ValidationError);
}

TEST_CASE("490 of 500") {
  std::vector<MCQItem> items;
  std::vector<Prediction> preds;
  for (int i = 0; i < 500; ++i) {
    items.push_back(item("v" + std::to_string(i), OptionLabel::C));
    preds.push_back(pred(items.back().id, i < 490 ? OptionLabel::C : OptionLabel::D));
  }
  const auto r = accuracy(preds, Corpus(items, "x"));
  CHECK(r.accuracy == doctest::Approx(0.98).epsilon(1e-12));
  CHECK(format_score(r.accuracy) == "0.9800");
}

TEST_CASE("argmax") {
  const std::array<double, 4> a = {0.1, 0.6, 0.2, 0.1};
  CHECK(argmax_label(a) == OptionLabel::B);
  const std::array<double, 4> u = {0.25, 0.25, 0.25, 0.25};
  CHECK(argmax_label(u) == OptionLabel::A);
  const std::array<double, 4> tie = {0.1, 0.4, 0.1, 0.4};
  CHECK(argmax_label(tie) == OptionLabel::B);
}

TEST_CASE("argmax is invariant under monotone transforms") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::array<double, 4> v{};
    for (auto& x : v) x = u(rng);
    const auto base = argmax_label(v);
    CHECK(index_of(base) == oracle::argmax_scan(v));
    std::array<double, 4> t1{}, t2{}, t3{};
    for (std::size_t j = 0; j < 4; ++j) {
      t1[j] = std::exp(3.0 * v[j]);
      t2[j] = 2.0 * v[j] + 7.0;
      t3[j] = std::log(v[j] + 1e-3);
    }
    CHECK(argmax_label(t1) == base);
    CHECK(argmax_label(t2) == base);
    CHECK(argmax_label(t3) == base);
  }
}

TEST_CASE("scorer argmax over the tiny bundle matches a linear scan") {
  const auto corpus = load_corpus(fixture("tiny/corpus.jsonl"), CorpusFormat::line_records);
  const auto bundle = load_scores(fixture("tiny/scores.jsonl"), corpus);
  const auto preds = scorer_argmax(bundle, corpus);
  REQUIRE(preds.size() == corpus.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& it = corpus.items()[i];
    CHECK(preds[i].item_id == it.id);
    CHECK(preds[i].source == PredictionSource::scorer_argmax);
    CHECK(preds[i].predicted ==
          label_at(oracle::argmax_scan(bundle.at(it.id).confidence.scores())));
  }
  // q1..q6: A, B, A (uniform), D, A, D
  const std::string expect = "ABADAD";
  for (std::size_t i = 0; i < 6; ++i) CHECK(to_char(*preds[i].predicted) == expect[i]);

  const Corpus bigger({corpus.items()[0], item("extra", OptionLabel::A)}, "x");
  CHECK_THROWS_AS(scorer_argmax(bundle, bigger), ValidationError);
}

TEST_CASE("rule baseline") {
  MCQItem it = item("r", OptionLabel::C);
  it.question = "闪电像火蛇";
  it.options = {"雷声", "天空", "火蛇", "大雨"};
  CHECK(rule_baseline(it) == OptionLabel::C);

  it.question = "今天下雨了";
  it.options = {"太阳", "月亮", "星星", "白云"};
  CHECK_FALSE(rule_baseline(it));

  // Coverage beats position.
  it.question = "在句子「她的笑容像阳光」中，喻体是什么？";
  it.options = {"温暖", "阳光", "雨水", "星辰"};
  CHECK(rule_baseline(it) == OptionLabel::B);
}

TEST_CASE("rule baseline on the 20-item fixture") {
  const auto corpus = load_corpus(fixture("rules/corpus.jsonl"), CorpusFormat::line_records);
  REQUIRE(corpus.size() == 20);
  // r01-r12 have exactly one option sharing text with the sentence, and it
  // is the gold answer, so the heuristic must get all twelve.
  const auto preds = rule_predictions(corpus);
  for (std::size_t i = 0; i < 12; ++i) {
    CAPTURE(corpus.items()[i].id);
    CHECK(preds[i].predicted == corpus.items()[i].gold);
  }
  // r16 shares nothing with its options.
  CHECK_FALSE(preds[15].predicted);
  const auto r = accuracy(preds, corpus, "rule_baseline");
  CHECK(r.accuracy >= 0.6);
  for (const auto& p : preds) CHECK(p.source == PredictionSource::rule_baseline);
}

TEST_CASE("submission and comparison rendering") {
  const auto h = hand_count();
  const auto csv = render_submission(h.preds, h.corpus);
  CHECK(csv.starts_with("id,answer\nh0,A\nh1,B\n"));
  CHECK(csv.find("\nh9,\n") != std::string::npos);
  const std::vector<EvalReport> reports = {accuracy(h.preds, h.corpus, "full"),
                                           accuracy(h.preds, h.corpus, "plain_zero_shot")};
  const auto table = render_comparison(reports);
  CHECK(table.find("full") != std::string::npos);
  CHECK(table.find("plain_zero_shot") != std::string::npos);
  CHECK(table.find("0.7000") != std::string::npos);
}

TEST_CASE("prediction json round trip") {
  const auto p = Prediction{"x", "full", OptionLabel::D, PredictionSource::rule_baseline};
  const auto q = prediction_from_json(to_json(p));
  CHECK(q.item_id == "x");
  CHECK(q.predicted == OptionLabel::D);
  CHECK(q.source == PredictionSource::rule_baseline);
  const auto none = prediction_from_json(to_json(Prediction{"y", "full", std::nullopt}));
  CHECK_FALSE(none.predicted);
}
