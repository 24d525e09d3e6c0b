#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "mstage/error.hpp"
#include "mstage/score_bridge.hpp"
#include "support/test_support.hpp"

using namespace mstage;
using testing_support::fixture;

namespace {

Corpus small_corpus(std::size_t n) {
  std::vector<MCQItem> items;
  for (std::size_t i = 1; i <= n; ++i) {
    MCQItem it;
    it.id = "q" + std::to_string(i);
    it.question = "q";
    it.options = {"a", "b", "c", "d"};
    items.push_back(it);
  }
  return Corpus(std::move(items), "small");
}

ScoreBundle parse(const std::string& text, const Corpus& c) {
  std::istringstream in(text);
  return parse_scores(in, c);
}

const std::string kHeader = R"({"dimension":2,"scorer_id":"t","checkpoint":"c"})" "\n";

}  // namespace

TEST_CASE("confidence vector invariant") {
  const auto u = ConfidenceVector::make({0.25, 0.25, 0.25, 0.25});
  CHECK(u == ConfidenceVector::uniform());
  CHECK_NOTHROW(ConfidenceVector::make({0.7, 0.1, 0.1, 0.1}));
  try {
    ConfidenceVector::make({0.5, 0.2, 0.13, 0.1});  // sums to 0.93
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("not normalized") != std::string::npos);
  }
  CHECK_THROWS_AS(ConfidenceVector::make({1.2, -0.2, 0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(ConfidenceVector::make({NAN, 0.5, 0.25, 0.25}), ValidationError);
  // Inside tolerance: renormalized exactly.
  const auto v = ConfidenceVector::make({0.4, 0.3, 0.2, 0.1000004});
  CHECK(std::abs(v.scores()[0] + v.scores()[1] + v.scores()[2] + v.scores()[3] - 1.0) < 1e-15);
  CHECK_THROWS_AS(ConfidenceVector::make({0.4, 0.3, 0.2, 0.100002}), ValidationError);
}

TEST_CASE("confidence margin") {
  CHECK(confidence_margin(ConfidenceVector::uniform()) == 0.0);
  CHECK(confidence_margin(ConfidenceVector::make({0.7, 0.1, 0.1, 0.1})) ==
        doctest::Approx(0.6).epsilon(1e-12));
  CHECK(confidence_margin(ConfidenceVector::make({0.4, 0.35, 0.15, 0.10})) ==
        doctest::Approx(0.05).epsilon(1e-12));
  // Permuting the options leaves the margin unchanged, up to the last-ulp
  // differences renormalization picks up from the summation order.
  const double m = confidence_margin(ConfidenceVector::make({0.1, 0.5, 0.3, 0.1}));
  CHECK(confidence_margin(ConfidenceVector::make({0.3, 0.5, 0.1, 0.1})) ==
        doctest::Approx(m).epsilon(1e-12));
  CHECK(confidence_margin(ConfidenceVector::make({0.1, 0.5, 0.1, 0.3})) ==
        doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("score file validation") {
  const Corpus c = small_corpus(3);
  const std::string ok = kHeader +
                         R"({"id":"q1","confidence":[0.25,0.25,0.25,0.25],"embedding":[1,2]})" "\n";
  const auto b = parse(ok, c);
  CHECK(b.size() == 1);
  CHECK(b.dimension() == 2);
  CHECK(b.provenance().scorer_id == "t");
  CHECK(b.at("q1").embedding == std::vector<double>{1, 2});

  CHECK_THROWS_AS(parse(kHeader + R"({"id":"zz","confidence":[0.25,0.25,0.25,0.25],"embedding":[1,2]})", c),
                  FormatError);
  CHECK_THROWS_AS(parse(ok + ok.substr(kHeader.size()), c), FormatError);  // duplicate
  CHECK_THROWS_AS(parse(kHeader + R"({"id":"q1","confidence":[0.5,0.2,0.13,0.1],"embedding":[1,2]})", c),
                  FormatError);
  CHECK_THROWS_AS(parse(kHeader + R"({"id":"q1","confidence":[0.25,0.25,0.25,0.25],"embedding":[1,2,3]})", c),
                  FormatError);
  CHECK_THROWS_AS(parse(kHeader + R"({"id":"q1","confidence":[0.5,0.5,0],"embedding":[1,2]})", c),
                  FormatError);
  CHECK_THROWS_AS(parse(R"({"id":"q1","confidence":[0.25,0.25,0.25,0.25],"embedding":[1,2]})", c),
                  FormatError);
  CHECK_THROWS_AS(parse("", c), FormatError);
}

TEST_CASE("fixture bundle covers the six-item corpus") {
  const Corpus c = load_corpus(fixture("tiny/corpus.jsonl"), CorpusFormat::line_records);
  const auto b = load_scores(fixture("tiny/scores.jsonl"), c);
  CHECK(b.size() == 6);
  CHECK_NOTHROW(require_coverage(b, c));
}

TEST_CASE("uniform fallback") {
  const Corpus c = small_corpus(3);
  const auto b = uniform_fallback(c, 5);
  CHECK(b.size() == 3);
  for (const auto& [id, e] : b.entries()) {
    CHECK(e.confidence == ConfidenceVector::uniform());
    CHECK(e.embedding == std::vector<double>(5, 0.0));
  }
  // Its serialization passes the loader.
  const auto again = parse(dump_scores(b, &c), c);
  CHECK(again.size() == 3);
  CHECK(again.dimension() == 5);
}

TEST_CASE("round trip preserves values") {
  const Corpus c = small_corpus(40);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0), e(-5.0, 5.0);
  std::map<std::string, ScoreEntry> entries;
  for (const auto& item : c) {
    std::array<double, 4> raw{};
    double sum = 0;
    for (auto& x : raw) sum += (x = u(rng));
    for (auto& x : raw) x /= sum;
    ScoreEntry entry;
    entry.confidence = ConfidenceVector::make(raw);
    for (int j = 0; j < 7; ++j) entry.embedding.push_back(e(rng));
    entries[item.id] = entry;
  }
  const ScoreBundle b({7, "rt", "ck"}, entries);
  const auto again = parse(dump_scores(b, &c), c);
  for (const auto& [id, entry] : b.entries()) {
    const auto& other = again.at(id);
    double sum = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::abs(other.confidence.scores()[k] - entry.confidence.scores()[k]) <= 1e-9);
      sum += other.confidence.scores()[k];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    for (std::size_t j = 0; j < 7; ++j) CHECK(other.embedding[j] == entry.embedding[j]);
  }
}

TEST_CASE("coverage check names the missing item") {
  const Corpus c = small_corpus(2);
  const auto b = parse(kHeader + R"({"id":"q1","confidence":[0.25,0.25,0.25,0.25],"embedding":[1,2]})" "\n", c);
  try {
    require_coverage(b, c);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("q2") != std::string::npos);
    CHECK(e.stage() == "score_bridge");
  }
}

TEST_CASE("scores over HTTP") {
  const Corpus c = load_corpus(fixture("tiny/corpus.jsonl"), CorpusFormat::line_records);
  const std::string body = testing_support::slurp(fixture("tiny/scores.jsonl"));
  httplib::Server server;
  server.Get("/scores.jsonl", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(body, "application/x-ndjson");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  const auto b = fetch_scores(base + "/scores.jsonl", c);
  CHECK(b.size() == 6);
  CHECK_THROWS_AS(fetch_scores(base + "/missing", c), Error);
  server.stop();
  t.join();
}
