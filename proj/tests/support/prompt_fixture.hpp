#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mstage/prompt_builder.hpp"
#include "support/test_support.hpp"

namespace testing_support {

struct PromptFixture {
  mstage::MCQItem item;
  mstage::ConfidenceVector candidates = mstage::ConfidenceVector::uniform();
  std::vector<mstage::Demonstration> demos;
};

inline PromptFixture load_prompt_fixture() {
  const auto doc = nlohmann::json::parse(slurp(fixture("prompts/inputs.json")));
  PromptFixture f;
  const auto& it = doc.at("item");
  f.item.id = it.at("id").get<std::string>();
  f.item.question = it.at("question").get<std::string>();
  for (std::size_t i = 0; i < 4; ++i) f.item.options[i] = it.at("options")[i].get<std::string>();
  f.item.gold = mstage::parse_label(it.at("gold").get<std::string>());
  f.candidates = mstage::ConfidenceVector::make(doc.at("candidates").get<std::array<double, 4>>());
  for (const auto& d : doc.at("demonstrations")) {
    mstage::Demonstration demo;
    demo.item_id = d.at("item_id").get<std::string>();
    demo.question = d.at("question").get<std::string>();
    for (std::size_t i = 0; i < 4; ++i) demo.options[i] = d.at("options")[i].get<std::string>();
    demo.chain_text = d.at("chain_text").get<std::string>();
    demo.answer = *mstage::parse_label(d.at("answer").get<std::string>());
    f.demos.push_back(demo);
  }
  return f;
}

inline std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto nl = s.find('\n', start);
    out.push_back(s.substr(start, nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return out;
}

// When `shorter` equals `longer` with exactly one contiguous run of lines
// removed, returns that run joined by '\n'; otherwise returns nullopt.
inline std::optional<std::string> single_removed_block(const std::string& longer,
                                                       const std::string& shorter) {
  const auto a = split_lines(longer), b = split_lines(shorter);
  if (b.size() >= a.size()) return std::nullopt;
  std::size_t p = 0;
  while (p < b.size() && a[p] == b[p]) ++p;
  std::size_t s = 0;
  while (s < b.size() - p && a[a.size() - 1 - s] == b[b.size() - 1 - s]) ++s;
  if (p + s != b.size()) return std::nullopt;
  std::string block;
  for (std::size_t i = p; i < a.size() - s; ++i) {
    if (i > p) block += '\n';
    block += a[i];
  }
  return block;
}

}  // namespace testing_support
