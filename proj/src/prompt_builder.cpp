#include "mstage/prompt_builder.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "mstage/error.hpp"
#include "mstage/utf8.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "prompt_builder";

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string answer_sentence(OptionLabel label) {
  return std::string("The answer is ") + to_char(label) + ".";
}

std::string demonstration_block(std::span<const Demonstration> demos, const PromptStyle& style) {
  std::vector<std::string> rendered;
  rendered.reserve(demos.size());
  for (const auto& d : demos) rendered.push_back(render_demonstration(d, style));
  // Trailing newline leaves one blank line between the block and the question.
  return "Demonstration:\n" + join(rendered, "\n\n") + "\n";
}

std::string reference_block(std::span<const Suggestion> suggestions, bool with_reasons,
                            const PromptStyle& style) {
  std::vector<std::string> lines;
  for (const auto& s : suggestions) {
    std::string head = "Reference answer";
    if (!s.source.empty()) head += " (" + s.source + ")";
    lines.push_back(head + ": " + to_char(s.answer));
    if (with_reasons && !s.reason.empty()) {
      lines.push_back("Reason: " + std::string(utf8::trim(s.reason)));
    }
  }
  lines.push_back(style.disclaimer);
  return join(lines, "\n");
}

}  // namespace

std::string_view to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::full: return "full";
    case PromptMode::no_candidates: return "no_candidates";
    case PromptMode::no_demonstrations: return "no_demonstrations";
    case PromptMode::plain_zero_shot: return "plain_zero_shot";
    case PromptMode::reference_answer: return "reference_answer";
    case PromptMode::reference_answer_with_reasons: return "reference_answer_with_reasons";
  }
  return "full";
}

std::optional<PromptMode> parse_prompt_mode(std::string_view text) {
  std::string s(text);
  std::replace(s.begin(), s.end(), '-', '_');
  for (auto m : {PromptMode::full, PromptMode::no_candidates, PromptMode::no_demonstrations,
                 PromptMode::plain_zero_shot, PromptMode::reference_answer,
                 PromptMode::reference_answer_with_reasons}) {
    if (s == to_string(m)) return m;
  }
  if (s == "plain") return PromptMode::plain_zero_shot;
  return std::nullopt;
}

std::optional<CandidateStyle> parse_candidate_style(std::string_view text) {
  if (text == "scores") return CandidateStyle::scores;
  if (text == "ranked") return CandidateStyle::ranked;
  return std::nullopt;
}

std::string format_score(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, 4);
  if (ec != std::errc()) throw Error(kStage, "cannot format score");
  return std::string(buf, ptr);
}

std::string render_candidates(const ConfidenceVector& p, CandidateStyle style) {
  std::vector<std::size_t> order(4);
  std::iota(order.begin(), order.end(), 0);
  if (style == CandidateStyle::ranked) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return p.scores()[a] > p.scores()[b];
    });
  }
  std::vector<std::string> parts;
  for (std::size_t i : order) {
    parts.push_back(std::string(1, to_char(label_at(i))) + ":" + format_score(p.scores()[i]));
  }
  return join(parts, style == CandidateStyle::ranked ? " > " : ", ");
}

std::string render_question(const std::string& question,
                            const std::array<std::string, 4>& options) {
  std::string out = "Q: " + question;
  for (auto label : kAllLabels) {
    out += "\n";
    out += to_char(label);
    out += ". " + options[index_of(label)];
  }
  return out;
}

std::string render_question(const MCQItem& item) {
  return render_question(item.question, item.options);
}

std::string render_demonstration(const Demonstration& demo, const PromptStyle& style) {
  return render_question(demo.question, demo.options) + "\nA: " + style.trigger + " " +
         std::string(utf8::trim(demo.chain_text)) + "\n" + answer_sentence(demo.answer);
}

HeuristicPrompt build_prompt(const MCQItem& item, std::span<const Demonstration> demos,
                             const std::optional<ConfidenceVector>& candidates, PromptMode mode,
                             const PromptStyle& style, std::span<const Suggestion> suggestions) {
  const bool reference = mode == PromptMode::reference_answer ||
                         mode == PromptMode::reference_answer_with_reasons;
  const bool use_demos = mode == PromptMode::full || mode == PromptMode::no_candidates ||
                         (reference && !demos.empty());
  const bool use_candidates = mode == PromptMode::full || mode == PromptMode::no_demonstrations;

  const std::string mode_name(to_string(mode));
  if ((mode == PromptMode::full || mode == PromptMode::no_candidates) && demos.empty()) {
    throw ValidationError(kStage, "mode " + mode_name + " requires demonstrations");
  }
  if (use_candidates && !candidates) {
    throw ValidationError(kStage, "mode " + mode_name + " requires answer candidates");
  }
  if (reference && suggestions.empty()) {
    throw ValidationError(kStage, "mode " + mode_name + " requires a suggested answer");
  }

  HeuristicPrompt prompt;
  prompt.mode = mode;
  prompt.item_id = item.id;

  std::vector<std::string> blocks;
  if (use_demos) {
    blocks.push_back(demonstration_block(demos, style));
    for (const auto& d : demos) prompt.demonstration_ids.push_back(d.item_id);
  }
  blocks.push_back(render_question(item));
  if (use_candidates) {
    blocks.push_back(std::string(kCandidatesPrefix) +
                     render_candidates(*candidates, style.candidate_style));
    prompt.candidates = candidates;
  }
  if (reference) {
    blocks.push_back(reference_block(suggestions,
                                     mode == PromptMode::reference_answer_with_reasons, style));
  }
  if (style.answer_instruction) blocks.emplace_back(kAnswerInstruction);
  blocks.push_back("A: " + style.trigger);
  prompt.text = join(blocks, "\n");
  return prompt;
}

}  // namespace mstage
