#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace mstage {

enum class OptionLabel : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::array<OptionLabel, 4> kAllLabels = {OptionLabel::A, OptionLabel::B,
                                                          OptionLabel::C, OptionLabel::D};

constexpr std::size_t index_of(OptionLabel label) { return static_cast<std::size_t>(label); }
constexpr OptionLabel label_at(std::size_t index) { return static_cast<OptionLabel>(index); }
constexpr char to_char(OptionLabel label) { return static_cast<char>('A' + index_of(label)); }

/// Accepts exactly "A".."D" (ASCII, uppercase).
std::optional<OptionLabel> parse_label(std::string_view text);

enum class Subtask : std::uint8_t { generation, components };
enum class Split : std::uint8_t { train, validation, test };

std::string_view to_string(Subtask subtask);
std::string_view to_string(Split split);
std::optional<Subtask> parse_subtask(std::string_view text);
std::optional<Split> parse_split(std::string_view text);

struct MCQItem {
  std::string id;
  std::string question;
  std::array<std::string, 4> options;
  std::optional<OptionLabel> gold;
  Subtask subtask = Subtask::components;
  Split split = Split::validation;

  const std::string& option(OptionLabel label) const { return options[index_of(label)]; }
};

struct CorpusMetadata {
  std::string source;
  std::map<Split, std::size_t> split_counts;
  std::size_t unlabeled = 0;
};

/// Ordered, id-unique collection of validated items. Immutable once built.
class Corpus {
 public:
  Corpus() = default;
  /// Validates every item; throws ValidationError on duplicate ids or
  /// malformed items.
  Corpus(std::vector<MCQItem> items, std::string source);

  const std::vector<MCQItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const CorpusMetadata& metadata() const { return metadata_; }

  const MCQItem* find(std::string_view id) const;
  const MCQItem& at(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<MCQItem> items_;
  std::unordered_map<std::string, std::size_t> index_;
  CorpusMetadata metadata_;
};

enum class CorpusFormat : std::uint8_t {
  /// The shared-task release layout (JSON array or JSON lines with
  /// per-option keys); mapped into the native shape by an adapter.
  task_native,
  /// One native record per line: {id, question, options[4], gold?, subtask, split?}.
  line_records,
};

std::optional<CorpusFormat> parse_corpus_format(std::string_view text);

struct LoadOptions {
  Subtask default_subtask = Subtask::components;
  Split default_split = Split::validation;
};

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const LoadOptions& options = {});
Corpus parse_corpus(std::istream& in, CorpusFormat format, const std::string& source,
                    const LoadOptions& options = {});

/// Deterministic partition. The first corpus holds floor(fraction * N) items;
/// both halves keep the input order.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed);

nlohmann::json to_json(const MCQItem& item);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace mstage
