#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mstage/dataset.hpp"
#include "mstage/demonstration.hpp"
#include "mstage/score_bridge.hpp"

namespace mstage {

enum class PromptMode {
  full,
  no_candidates,
  no_demonstrations,
  plain_zero_shot,
  reference_answer,
  reference_answer_with_reasons,
};

std::string_view to_string(PromptMode mode);
/// Accepts the snake_case names and their hyphenated spellings.
std::optional<PromptMode> parse_prompt_mode(std::string_view text);

enum class CandidateStyle { scores, ranked };

std::optional<CandidateStyle> parse_candidate_style(std::string_view text);

struct PromptStyle {
  std::string trigger = "Let's think step by step.";
  /// Adds the common answer-phase instruction required by the LLM track.
  bool answer_instruction = true;
  CandidateStyle candidate_style = CandidateStyle::scores;
  std::string disclaimer = "Note: the reference answer may be incorrect.";
};

/// A suggested answer fed to the reference_answer modes.
struct Suggestion {
  std::string source;  ///< e.g. "scorer", "rules", "llm"; may be empty
  OptionLabel answer = OptionLabel::A;
  std::string reason;  ///< rendered only in reference_answer_with_reasons
};

struct HeuristicPrompt {
  PromptMode mode = PromptMode::full;
  std::string item_id;
  std::string text;
  std::vector<std::string> demonstration_ids;
  std::optional<ConfidenceVector> candidates;
};

inline constexpr std::string_view kCandidatesPrefix = "Answer candidates: ";
inline constexpr std::string_view kAnswerInstruction = "Answer format: \"The answer is {}.\"";

/// Score with exactly four decimals, locale-independent, correctly rounded
/// (exact binary ties go to even).
std::string format_score(double value);

/// "A:0.7000, B:0.1000, C:0.1000, D:0.1000" (scores) or the same pairs
/// ordered by descending score and joined with " > " (ranked).
std::string render_candidates(const ConfidenceVector& p,
                              CandidateStyle style = CandidateStyle::scores);

/// "Q: <question>" followed by one "X. <option>" line per option.
std::string render_question(const MCQItem& item);
std::string render_question(const std::string& question,
                            const std::array<std::string, 4>& options);

std::string render_demonstration(const Demonstration& demo, const PromptStyle& style = {});

/// Renders the prompt for `mode`. Throws ValidationError when the mode needs
/// demonstrations, candidates or suggestions that were not supplied.
HeuristicPrompt build_prompt(const MCQItem& item, std::span<const Demonstration> demos,
                             const std::optional<ConfidenceVector>& candidates, PromptMode mode,
                             const PromptStyle& style = {},
                             std::span<const Suggestion> suggestions = {});

}  // namespace mstage
