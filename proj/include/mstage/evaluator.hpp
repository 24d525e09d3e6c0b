#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mstage/dataset.hpp"
#include "mstage/score_bridge.hpp"

namespace mstage {

enum class PredictionSource { llm, scorer_argmax, rule_baseline };

std::string_view to_string(PredictionSource source);

struct Prediction {
  std::string item_id;
  std::string mode;
  std::optional<OptionLabel> predicted;
  PredictionSource source = PredictionSource::llm;
};

enum class Outcome { correct, wrong, unextracted, skipped_no_gold };

std::string_view to_string(Outcome outcome);

struct ReportRow {
  std::string item_id;
  std::optional<OptionLabel> gold;
  std::optional<OptionLabel> predicted;
  Outcome outcome = Outcome::unextracted;
};

struct EvalCounts {
  std::size_t correct = 0;
  std::size_t wrong = 0;
  std::size_t unextracted = 0;
  std::size_t skipped_no_gold = 0;

  std::size_t total() const { return correct + wrong + unextracted + skipped_no_gold; }
  bool operator==(const EvalCounts&) const = default;
};

struct EvalReport {
  std::string mode;
  EvalCounts counts;
  /// correct / (correct + wrong + unextracted); 0 when nothing is labeled.
  double accuracy = 0.0;
  std::vector<ReportRow> rows;

  std::string render_table() const;
  /// One JSON record per item followed by a summary record.
  std::string render_records() const;
};

/// Scores predictions against gold labels. Items without a prediction count
/// as unextracted; items without gold are skipped. Throws ValidationError on
/// a prediction for an unknown id.
EvalReport accuracy(std::span<const Prediction> predictions, const Corpus& corpus,
                    const std::string& mode = "");

/// Index of the largest score, ties to the earlier label.
OptionLabel argmax_label(std::span<const double, 4> scores);

std::vector<Prediction> scorer_argmax(const ScoreBundle& bundle, const Corpus& corpus);

/// Comparator-word heuristic: prefers the option with the most text shared
/// with the sentence (coverage by common substrings, then the longest common
/// substring, then adjacency to a comparator such as 像/如/似/是), ties to the
/// earlier label. Absent when no option overlaps the sentence.
std::optional<OptionLabel> rule_baseline(const MCQItem& item);

std::vector<Prediction> rule_predictions(const Corpus& corpus);

/// One row per report: mode, counts and accuracy.
std::string render_comparison(std::span<const EvalReport> reports);

/// "id,answer" CSV in corpus order; unanswered items have an empty answer.
std::string render_submission(std::span<const Prediction> predictions, const Corpus& corpus);

nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& rec);

}  // namespace mstage
