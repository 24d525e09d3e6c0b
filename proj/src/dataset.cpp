#include "mstage/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mstage/error.hpp"
#include "mstage/jsonl.hpp"
#include "mstage/random.hpp"
#include "mstage/utf8.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "dataset";

using Json = nlohmann::json;

std::string require_string(const Json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string()) {
    throw FormatError(kStage, line, std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<OptionLabel> read_gold(const Json& value, std::size_t line) {
  if (value.is_null()) return std::nullopt;
  if (!value.is_string()) throw FormatError(kStage, line, "gold must be a string label");
  auto text = std::string(utf8::trim(value.get<std::string>()));
  if (text.empty()) return std::nullopt;
  auto label = parse_label(text);
  if (!label) throw FormatError(kStage, line, "invalid gold label '" + text + "'");
  return label;
}

MCQItem from_line_record(const Json& rec, std::size_t line, const LoadOptions& opts) {
  if (!rec.is_object()) throw FormatError(kStage, line, "record is not an object");
  MCQItem item;
  item.id = require_string(rec, "id", line);
  item.question = require_string(rec, "question", line);
  auto opts_it = rec.find("options");
  if (opts_it == rec.end() || !opts_it->is_array()) {
    throw FormatError(kStage, line, "missing options array");
  }
  if (opts_it->size() != 4) {
    throw FormatError(kStage, line,
                      "expected 4 options, got " + std::to_string(opts_it->size()));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(*opts_it)[i].is_string()) throw FormatError(kStage, line, "option is not a string");
    item.options[i] = (*opts_it)[i].get<std::string>();
  }
  if (auto g = rec.find("gold"); g != rec.end()) item.gold = read_gold(*g, line);
  item.subtask = opts.default_subtask;
  if (auto s = rec.find("subtask"); s != rec.end()) {
    auto parsed = s->is_string() ? parse_subtask(s->get<std::string>()) : std::nullopt;
    if (!parsed) throw FormatError(kStage, line, "invalid subtask");
    item.subtask = *parsed;
  }
  item.split = opts.default_split;
  if (auto s = rec.find("split"); s != rec.end()) {
    auto parsed = s->is_string() ? parse_split(s->get<std::string>()) : std::nullopt;
    if (!parsed) throw FormatError(kStage, line, "invalid split");
    item.split = *parsed;
  }
  return item;
}

// Strips a leading "A." / "A、" / "A:" / "(A)" style marker from a release option.
std::string strip_option_marker(const std::string& text, OptionLabel label) {
  auto body = utf8::decode(utf8::trim(text));
  const char32_t upper = U'A' + static_cast<char32_t>(index_of(label));
  std::size_t pos = 0;
  bool bracketed = false;
  if (!body.empty() && (body[0] == U'(' || body[0] == U'（')) {
    bracketed = true;
    pos = 1;
  }
  if (pos >= body.size() || body[pos] != upper) return std::string(utf8::trim(text));
  ++pos;
  if (bracketed) {
    if (pos < body.size() && (body[pos] == U')' || body[pos] == U'）')) {
      ++pos;
    } else {
      return std::string(utf8::trim(text));
    }
  } else {
    static constexpr std::u32string_view kSeps = U".:、．：)）";
    if (pos < body.size() && kSeps.find(body[pos]) != std::u32string_view::npos) {
      ++pos;
    } else {
      return std::string(utf8::trim(text));
    }
  }
  return std::string(utf8::trim(utf8::encode(body.substr(pos))));
}

const Json* first_key(const Json& rec, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = rec.find(k);
    if (it != rec.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

std::string scalar_to_string(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  return v.dump();
}

MCQItem from_release_record(const Json& rec, std::size_t index, const LoadOptions& opts) {
  if (!rec.is_object()) throw FormatError(kStage, index, "record is not an object");
  MCQItem item;
  const Json* id = first_key(rec, {"id", "index", "metaphor_id", "qid"});
  item.id = id ? scalar_to_string(*id) : std::to_string(index);
  const Json* q = first_key(rec, {"question", "sentence", "context", "metaphor", "text"});
  if (!q || !q->is_string()) throw FormatError(kStage, index, "missing question text");
  item.question = q->get<std::string>();

  if (const Json* arr = first_key(rec, {"options", "choices", "candidates"})) {
    if (!arr->is_array() || arr->size() != 4) {
      throw FormatError(kStage, index, "expected 4 options");
    }
    for (std::size_t i = 0; i < 4; ++i) {
      if (!(*arr)[i].is_string()) throw FormatError(kStage, index, "option is not a string");
      item.options[i] = strip_option_marker((*arr)[i].get<std::string>(), label_at(i));
    }
  } else {
    std::size_t found = 0;
    for (auto label : kAllLabels) {
      const std::string l(1, to_char(label));
      const std::string lower(1, static_cast<char>(l[0] - 'A' + 'a'));
      const Json* v = first_key(rec, {l.c_str(), ("option_" + l).c_str(),
                                      ("option" + l).c_str(), ("option_" + lower).c_str()});
      if (v && v->is_string()) {
        item.options[index_of(label)] = strip_option_marker(v->get<std::string>(), label);
        ++found;
      }
    }
    if (found != 4) {
      throw FormatError(kStage, index, "expected 4 options, got " + std::to_string(found));
    }
  }
  if (const Json* g = first_key(rec, {"answer", "label", "gold"})) {
    item.gold = read_gold(*g, index);
  }
  item.subtask = opts.default_subtask;
  item.split = opts.default_split;
  return item;
}

void validate_item(const MCQItem& item, std::size_t record) {
  if (item.id.empty()) throw FormatError(kStage, record, "empty id");
  if (utf8::trim(item.question).empty()) {
    throw FormatError(kStage, record, "empty question for id " + item.id);
  }
  for (auto label : kAllLabels) {
    if (utf8::trim(item.option(label)).empty()) {
      throw FormatError(kStage, record,
                        std::string("empty option ") + to_char(label) + " for id " + item.id);
    }
  }
}

}  // namespace

std::optional<OptionLabel> parse_label(std::string_view text) {
  if (text.size() != 1 || text[0] < 'A' || text[0] > 'D') return std::nullopt;
  return label_at(static_cast<std::size_t>(text[0] - 'A'));
}

std::string_view to_string(Subtask subtask) {
  return subtask == Subtask::generation ? "generation" : "components";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "validation";
}

std::optional<Subtask> parse_subtask(std::string_view text) {
  if (text == "generation") return Subtask::generation;
  if (text == "components") return Subtask::components;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  return std::nullopt;
}

std::optional<CorpusFormat> parse_corpus_format(std::string_view text) {
  if (text == "task-native") return CorpusFormat::task_native;
  if (text == "jsonl" || text == "line-records") return CorpusFormat::line_records;
  return std::nullopt;
}

Corpus::Corpus(std::vector<MCQItem> items, std::string source) : items_(std::move(items)) {
  metadata_.source = std::move(source);
  index_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    validate_item(item, i + 1);
    if (!index_.emplace(item.id, i).second) {
      throw ValidationError(kStage, "duplicate id '" + item.id + "' at record " +
                                        std::to_string(i + 1));
    }
    ++metadata_.split_counts[item.split];
    if (!item.gold) ++metadata_.unlabeled;
  }
}

const MCQItem* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

const MCQItem& Corpus::at(std::string_view id) const {
  const MCQItem* item = find(id);
  if (!item) throw ValidationError(kStage, "unknown item id '" + std::string(id) + "'");
  return *item;
}

Corpus parse_corpus(std::istream& in, CorpusFormat format, const std::string& source,
                    const LoadOptions& options) {
  std::vector<MCQItem> items;
  if (format == CorpusFormat::line_records) {
    jsonl::read(in, kStage, [&](std::size_t line, const Json& rec) {
      items.push_back(from_line_record(rec, line, options));
      validate_item(items.back(), line);
    });
    return Corpus(std::move(items), source);
  }

  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return Corpus({}, source);
  if (text[first] == '[') {
    Json doc;
    try {
      doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw FormatError(kStage, 0, std::string("invalid JSON array: ") + e.what());
    }
    for (std::size_t i = 0; i < doc.size(); ++i) {
      items.push_back(from_release_record(doc[i], i + 1, options));
      validate_item(items.back(), i + 1);
    }
  } else {
    std::istringstream lines(text);
    jsonl::read(lines, kStage, [&](std::size_t line, const Json& rec) {
      items.push_back(from_release_record(rec, line, options));
      validate_item(items.back(), line);
    });
  }
  return Corpus(std::move(items), source);
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kStage, "cannot open corpus file " + path.string());
  return parse_corpus(in, format, path.string(), options);
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError(kStage, "train fraction must lie in (0, 1)");
  }
  if (corpus.empty()) throw ValidationError(kStage, "cannot split an empty corpus");
  const std::size_t n = corpus.size();
  // The epsilon absorbs products like 0.29 * 100 = 28.999999999999996.
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  std::vector<MCQItem> train, rest;
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : rest).push_back(corpus.items()[i]);
  }
  const auto& src = corpus.metadata().source;
  return {Corpus(std::move(train), src + "#train"), Corpus(std::move(rest), src + "#holdout")};
}

nlohmann::json to_json(const MCQItem& item) {
  Json j;
  j["id"] = item.id;
  j["question"] = item.question;
  j["options"] = Json::array();
  for (const auto& o : item.options) j["options"].push_back(o);
  j["gold"] = item.gold ? Json(std::string(1, to_char(*item.gold))) : Json(nullptr);
  j["subtask"] = std::string(to_string(item.subtask));
  j["split"] = std::string(to_string(item.split));
  return j;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<Json> records;
  records.reserve(corpus.size());
  for (const auto& item : corpus) records.push_back(to_json(item));
  jsonl::write_file(path, records);
}

}  // namespace mstage
