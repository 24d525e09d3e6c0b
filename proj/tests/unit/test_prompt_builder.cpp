#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "mstage/error.hpp"
#include "mstage/prompt_builder.hpp"
#include "support/oracles.hpp"
#include "support/prompt_fixture.hpp"

using namespace mstage;
using namespace testing_support;

namespace {

std::string golden(const std::string& mode) { return slurp(fixture("prompts/" + mode + ".txt")); }

std::string render(const PromptFixture& f, PromptMode mode, const PromptStyle& style = {}) {
  return build_prompt(f.item, f.demos, f.candidates, mode, style).text;
}

std::string last_line(const std::string& s) { return split_lines(s).back(); }

}  // namespace

TEST_CASE("goldens") {
  const auto f = load_prompt_fixture();
  for (auto mode : {PromptMode::full, PromptMode::no_candidates, PromptMode::no_demonstrations,
                    PromptMode::plain_zero_shot}) {
    const std::string name(to_string(mode));
    CAPTURE(name);
    CHECK(render(f, mode) == golden(name));
  }
}

TEST_CASE("mode pairs differ by exactly one block") {
  const auto f = load_prompt_fixture();
  const auto full = render(f, PromptMode::full);
  const auto no_cand = render(f, PromptMode::no_candidates);
  const auto no_demo = render(f, PromptMode::no_demonstrations);
  const auto plain = render(f, PromptMode::plain_zero_shot);
  const std::string cand_line = "Answer candidates: A:0.7000, B:0.1000, C:0.1000, D:0.1000";
  const auto demo_lines = split_lines(full);
  std::string demo_block;
  for (std::size_t i = 0; i < 25; ++i) demo_block += demo_lines[i] + (i < 24 ? "\n" : "");

  CHECK(single_removed_block(full, no_cand) == cand_line);
  CHECK(single_removed_block(no_demo, plain) == cand_line);
  CHECK(single_removed_block(full, no_demo) == demo_block);
  CHECK(single_removed_block(no_cand, plain) == demo_block);
}

TEST_CASE("structure") {
  const auto f = load_prompt_fixture();
  const auto full = render(f, PromptMode::full);
  // Blocks in order.
  const auto d = full.find("Demonstration:");
  const auto q = full.find("Q: 在句子「闪电像火蛇」");
  const auto c = full.find("Answer candidates: ");
  const auto a = full.rfind("A: Let's think step by step.");
  CHECK(d == 0);
  CHECK(d < q);
  CHECK(q < c);
  CHECK(c < a);
  // Each demonstration exactly once, in order.
  std::size_t prev = 0;
  for (const auto& demo : f.demos) {
    const auto text = render_demonstration(demo);
    const auto at = full.find(text);
    REQUIRE(at != std::string::npos);
    CHECK(full.find(text, at + 1) == std::string::npos);
    CHECK(at >= prev);
    prev = at;
  }
  const auto p = build_prompt(f.item, f.demos, f.candidates, PromptMode::full);
  CHECK(p.demonstration_ids == std::vector<std::string>{"d1", "d2", "d3"});
  CHECK(p.candidates == f.candidates);
  CHECK(p.item_id == "t1");
  CHECK(render(f, PromptMode::full) == full);  // pure
}

TEST_CASE("every mode ends with the trigger line") {
  const auto f = load_prompt_fixture();
  const std::vector<Suggestion> sug = {{"scorer", OptionLabel::B, "火蛇 is the vehicle."}};
  PromptStyle track2;
  track2.answer_instruction = false;
  PromptStyle zh;
  zh.trigger = "让我们一步一步地思考。";
  for (const auto& style : {PromptStyle{}, track2, zh}) {
    for (auto mode : {PromptMode::full, PromptMode::no_candidates, PromptMode::no_demonstrations,
                      PromptMode::plain_zero_shot, PromptMode::reference_answer,
                      PromptMode::reference_answer_with_reasons}) {
      const auto text = build_prompt(f.item, f.demos, f.candidates, mode, style, sug).text;
      CHECK(last_line(text) == "A: " + style.trigger);
      CHECK((text.find(kAnswerInstruction) != std::string::npos) == style.answer_instruction);
    }
  }
}

TEST_CASE("reference answer modes") {
  const auto f = load_prompt_fixture();
  const std::vector<Suggestion> sug = {{"scorer", OptionLabel::B, "火蛇 is the vehicle."},
                                       {"rules", OptionLabel::A, ""}};
  const auto plain = build_prompt(f.item, {}, std::nullopt, PromptMode::reference_answer, {}, sug).text;
  CHECK(plain ==
        "Q: 在句子「闪电像火蛇」中，喻体是什么？\nA. 闪电\nB. 火蛇\nC. 天空\nD. 雷声\n"
        "Reference answer (scorer): B\nReference answer (rules): A\n"
        "Note: the reference answer may be incorrect.\n"
        "Answer format: \"The answer is {}.\"\nA: Let's think step by step.");
  const auto reasons =
      build_prompt(f.item, {}, std::nullopt, PromptMode::reference_answer_with_reasons, {}, sug).text;
  CHECK(single_removed_block(reasons, plain) == "Reason: 火蛇 is the vehicle.");
  CHECK(plain.find("Answer candidates") == std::string::npos);
}

TEST_CASE("missing inputs") {
  const auto f = load_prompt_fixture();
  CHECK_THROWS_AS(build_prompt(f.item, {}, f.candidates, PromptMode::full), ValidationError);
  CHECK_THROWS_AS(build_prompt(f.item, f.demos, std::nullopt, PromptMode::full), ValidationError);
  CHECK_THROWS_AS(build_prompt(f.item, {}, f.candidates, PromptMode::no_candidates),
                  ValidationError);
  CHECK_THROWS_AS(build_prompt(f.item, {}, std::nullopt, PromptMode::no_demonstrations),
                  ValidationError);
  CHECK_THROWS_AS(build_prompt(f.item, {}, std::nullopt, PromptMode::reference_answer),
                  ValidationError);
  CHECK_NOTHROW(build_prompt(f.item, {}, std::nullopt, PromptMode::plain_zero_shot));
}

TEST_CASE("candidate rendering") {
  CHECK(render_candidates(ConfidenceVector::uniform()) == "A:0.2500, B:0.2500, C:0.2500, D:0.2500");
  CHECK(render_candidates(ConfidenceVector::make({0.1, 0.6, 0.2, 0.1}), CandidateStyle::ranked) ==
        "B:0.6000 > C:0.2000 > A:0.1000 > D:0.1000");
  CHECK(format_score(0.7110) == "0.7110");
  CHECK(format_score(0.0963) == "0.0963");
  CHECK(format_score(1.0) == "1.0000");
  CHECK(format_score(0.0) == "0.0000");
  // Exact binary ties round to even.
  CHECK(format_score(0.03125) == "0.0312");
  CHECK(format_score(0.09375) == "0.0938");
  CHECK(format_score(0.00005) == oracle::round_decimal(0.00005, 4));
}

TEST_CASE("score formatting agrees with the exact-decimal oracle") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double v = u(rng);
    CHECK(format_score(v) == oracle::round_decimal(v, 4));
  }
  // Every exact tie k/32 and values a hair either side of a rounding boundary.
  for (int k = 0; k <= 32; ++k) {
    const double v = k / 32.0;
    CHECK(format_score(v) == oracle::round_decimal(v, 4));
  }
  for (int k = 0; k < 10000; k += 37) {
    const double mid = (k + 0.5) / 10000.0;
    for (double v : {std::nextafter(mid, 0.0), mid, std::nextafter(mid, 1.0)}) {
      CHECK(format_score(v) == oracle::round_decimal(v, 4));
    }
  }
}

TEST_CASE("rendering separates vectors a grid step apart") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> grid(0, 2000);
  for (int i = 0; i < 500; ++i) {
    std::array<double, 4> a{};
    a[0] = grid(rng) / 10000.0;
    a[1] = grid(rng) / 10000.0;
    a[2] = grid(rng) / 10000.0;
    a[3] = 1.0 - a[0] - a[1] - a[2];
    auto b = a;
    b[0] += 2e-4;
    b[3] -= 2e-4;
    CHECK(render_candidates(ConfidenceVector::make(a)) != render_candidates(ConfidenceVector::make(b)));
  }
}

TEST_CASE("mode names") {
  CHECK(parse_prompt_mode("no-candidates") == PromptMode::no_candidates);
  CHECK(parse_prompt_mode("plain") == PromptMode::plain_zero_shot);
  CHECK(parse_prompt_mode("reference_answer_with_reasons") ==
        PromptMode::reference_answer_with_reasons);
  CHECK_FALSE(parse_prompt_mode("fancy"));
}
