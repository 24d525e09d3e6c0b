#include "mstage/evaluator.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "mstage/error.hpp"
#include "mstage/jsonl.hpp"
#include "mstage/prompt_builder.hpp"
#include "mstage/utf8.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "evaluator";
using Json = nlohmann::json;

std::string label_str(const std::optional<OptionLabel>& l) {
  return l ? std::string(1, to_char(*l)) : std::string("-");
}

Json label_json(const std::optional<OptionLabel>& l) {
  return l ? Json(std::string(1, to_char(*l))) : Json();
}

bool contains(std::u32string_view hay, std::u32string_view needle) {
  return hay.find(needle) != std::u32string_view::npos;
}

std::size_t longest_common_substring(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

bool is_punct(char32_t c) {
  static constexpr std::u32string_view kPunct = U"，。！？；：、,.!?;:\"“”‘’（）()《》 \t\n";
  return kPunct.find(c) != std::u32string_view::npos;
}

// Clause fragments immediately before and after each comparator word.
std::vector<std::u32string> comparator_spans(const std::u32string& s) {
  static const std::u32string kComparators[] = {U"仿佛", U"好比", U"像", U"如", U"似", U"是"};
  std::vector<std::u32string> spans;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t len = 0;
    for (const auto& comp : kComparators) {
      if (s.compare(i, comp.size(), comp) == 0) {
        len = comp.size();
        break;
      }
    }
    if (len == 0) {
      ++i;
      continue;
    }
    std::size_t left = i;
    while (left > 0 && !is_punct(s[left - 1])) --left;
    std::size_t right = i + len;
    while (right < s.size() && !is_punct(s[right])) ++right;
    if (left < i) spans.push_back(s.substr(left, i - left));
    if (i + len < right) spans.push_back(s.substr(i + len, right - i - len));
    i += len;
  }
  return spans;
}

struct RuleScore {
  std::size_t coverage = 0;
  std::size_t longest = 0;
  bool adjacent = false;

  auto key() const { return std::tuple(coverage, longest, adjacent); }
};

RuleScore score_option(const std::u32string& sentence, const std::vector<std::u32string>& spans,
                       std::u32string_view option) {
  RuleScore score;
  if (option.empty()) return score;
  const std::size_t min_len = std::min<std::size_t>(2, option.size());
  std::vector<bool> covered(option.size(), false);
  for (std::size_t i = 0; i + min_len <= option.size(); ++i) {
    for (std::size_t len = option.size() - i; len >= min_len; --len) {
      const auto piece = option.substr(i, len);
      if (contains(sentence, piece)) {
        std::fill(covered.begin() + static_cast<std::ptrdiff_t>(i),
                  covered.begin() + static_cast<std::ptrdiff_t>(i + len), true);
        for (const auto& span : spans) {
          if (contains(span, piece)) score.adjacent = true;
        }
        break;
      }
    }
  }
  score.coverage = static_cast<std::size_t>(std::count(covered.begin(), covered.end(), true));
  score.longest = longest_common_substring(sentence, option);
  return score;
}

}  // namespace

std::string_view to_string(PredictionSource source) {
  switch (source) {
    case PredictionSource::llm: return "llm";
    case PredictionSource::scorer_argmax: return "scorer_argmax";
    case PredictionSource::rule_baseline: return "rule_baseline";
  }
  return "llm";
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::correct: return "correct";
    case Outcome::wrong: return "wrong";
    case Outcome::unextracted: return "unextracted";
    case Outcome::skipped_no_gold: return "skipped_no_gold";
  }
  return "unextracted";
}

EvalReport accuracy(std::span<const Prediction> predictions, const Corpus& corpus,
                    const std::string& mode) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) {
    if (!corpus.contains(p.item_id)) {
      throw ValidationError(kStage, "prediction for unknown item '" + p.item_id + "'");
    }
    by_id[p.item_id] = &p;
  }
  EvalReport report;
  report.mode = mode;
  for (const auto& item : corpus) {
    ReportRow row;
    row.item_id = item.id;
    row.gold = item.gold;
    if (auto it = by_id.find(item.id); it != by_id.end()) row.predicted = it->second->predicted;
    if (!item.gold) {
      row.outcome = Outcome::skipped_no_gold;
      ++report.counts.skipped_no_gold;
    } else if (!row.predicted) {
      row.outcome = Outcome::unextracted;
      ++report.counts.unextracted;
    } else if (*row.predicted == *item.gold) {
      row.outcome = Outcome::correct;
      ++report.counts.correct;
    } else {
      row.outcome = Outcome::wrong;
      ++report.counts.wrong;
    }
    report.rows.push_back(std::move(row));
  }
  const std::size_t scored = report.counts.correct + report.counts.wrong + report.counts.unextracted;
  report.accuracy =
      scored == 0 ? 0.0 : static_cast<double>(report.counts.correct) / static_cast<double>(scored);
  return report;
}

std::string EvalReport::render_table() const {
  std::ostringstream out;
  out << "mode: " << mode << "\n"
      << "items: " << counts.total() << "\n"
      << "correct: " << counts.correct << "\n"
      << "wrong: " << counts.wrong << "\n"
      << "unextracted: " << counts.unextracted << "\n"
      << "skipped_no_gold: " << counts.skipped_no_gold << "\n"
      << "accuracy: " << format_score(accuracy) << "\n\n";
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.item_id.size());
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size() + 2, ' '); };
  out << pad("item_id") << "gold  predicted  outcome\n";
  for (const auto& r : rows) {
    out << pad(r.item_id) << label_str(r.gold) << "     " << label_str(r.predicted)
        << "          " << to_string(r.outcome) << "\n";
  }
  return out.str();
}

std::string EvalReport::render_records() const {
  std::string out;
  for (const auto& r : rows) {
    Json j;
    j["item_id"] = r.item_id;
    j["mode"] = mode;
    j["gold"] = label_json(r.gold);
    j["predicted"] = label_json(r.predicted);
    j["outcome"] = std::string(to_string(r.outcome));
    out += jsonl::dump_line(j);
  }
  Json summary;
  summary["summary"] = true;
  summary["mode"] = mode;
  summary["correct"] = counts.correct;
  summary["wrong"] = counts.wrong;
  summary["unextracted"] = counts.unextracted;
  summary["skipped_no_gold"] = counts.skipped_no_gold;
  summary["accuracy"] = accuracy;
  out += jsonl::dump_line(summary);
  return out;
}

OptionLabel argmax_label(std::span<const double, 4> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return label_at(best);
}

std::vector<Prediction> scorer_argmax(const ScoreBundle& bundle, const Corpus& corpus) {
  std::vector<Prediction> out;
  out.reserve(corpus.size());
  for (const auto& item : corpus) {
    const auto* entry = bundle.find(item.id);
    if (!entry) throw ValidationError(kStage, "missing score for item '" + item.id + "'");
    out.push_back({item.id, "scorer_argmax", argmax_label(entry->confidence.scores()),
                   PredictionSource::scorer_argmax});
  }
  return out;
}

std::optional<OptionLabel> rule_baseline(const MCQItem& item) {
  const std::u32string sentence = utf8::decode(item.question);
  const auto spans = comparator_spans(sentence);
  std::optional<OptionLabel> best;
  RuleScore best_score;
  for (auto label : kAllLabels) {
    const auto option = utf8::decode(utf8::trim(item.option(label)));
    const RuleScore s = score_option(sentence, spans, option);
    if (s.coverage == 0 && s.longest == 0) continue;
    if (!best || s.key() > best_score.key()) {
      best = label;
      best_score = s;
    }
  }
  return best;
}

std::vector<Prediction> rule_predictions(const Corpus& corpus) {
  std::vector<Prediction> out;
  for (const auto& item : corpus) {
    out.push_back({item.id, "rule_baseline", rule_baseline(item), PredictionSource::rule_baseline});
  }
  return out;
}

std::string render_comparison(std::span<const EvalReport> reports) {
  std::size_t width = 4;
  for (const auto& r : reports) width = std::max(width, r.mode.size());
  auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w - s.size() + 2, ' '); };
  std::ostringstream out;
  out << pad("mode", width) << "correct  wrong  unextracted  skipped  accuracy\n";
  for (const auto& r : reports) {
    out << pad(r.mode, width) << pad(std::to_string(r.counts.correct), 7)
        << pad(std::to_string(r.counts.wrong), 5) << pad(std::to_string(r.counts.unextracted), 11)
        << pad(std::to_string(r.counts.skipped_no_gold), 7) << format_score(r.accuracy) << "\n";
  }
  return out.str();
}

std::string render_submission(std::span<const Prediction> predictions, const Corpus& corpus) {
  std::map<std::string, std::optional<OptionLabel>> by_id;
  for (const auto& p : predictions) by_id[p.item_id] = p.predicted;
  std::string out = "id,answer\n";
  for (const auto& item : corpus) {
    out += item.id + ",";
    if (auto it = by_id.find(item.id); it != by_id.end() && it->second) out += to_char(*it->second);
    out += "\n";
  }
  return out;
}

Json to_json(const Prediction& p) {
  Json j;
  j["item_id"] = p.item_id;
  j["mode"] = p.mode;
  j["predicted"] = label_json(p.predicted);
  j["source"] = std::string(to_string(p.source));
  return j;
}

Prediction prediction_from_json(const Json& rec) {
  Prediction p;
  p.item_id = rec.at("item_id").get<std::string>();
  p.mode = rec.value("mode", std::string());
  if (auto it = rec.find("predicted"); it != rec.end() && it->is_string()) {
    p.predicted = parse_label(it->get<std::string>());
  }
  const auto src = rec.value("source", std::string("llm"));
  p.source = src == "scorer_argmax"   ? PredictionSource::scorer_argmax
             : src == "rule_baseline" ? PredictionSource::rule_baseline
                                      : PredictionSource::llm;
  return p;
}

}  // namespace mstage
