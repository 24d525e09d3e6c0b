#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mstage/dataset.hpp"

namespace mstage {

/// Four per-option confidences in [0, 1] summing to 1. Construct through
/// `make`, which enforces the invariant.
class ConfidenceVector {
 public:
  static constexpr double kSumTolerance = 1e-6;

  /// Inputs whose sum is within kSumTolerance of 1 are renormalized exactly;
  /// anything else throws ValidationError.
  static ConfidenceVector make(const std::array<double, 4>& scores);
  static ConfidenceVector uniform();

  double operator[](OptionLabel label) const { return scores_[index_of(label)]; }
  const std::array<double, 4>& scores() const { return scores_; }

  bool operator==(const ConfidenceVector&) const = default;

 private:
  explicit ConfidenceVector(const std::array<double, 4>& s) : scores_(s) {}
  std::array<double, 4> scores_{};
};

/// Top score minus runner-up.
double confidence_margin(const ConfidenceVector& p);

struct ScoreEntry {
  ConfidenceVector confidence = ConfidenceVector::uniform();
  std::vector<double> embedding;
};

struct ScoreProvenance {
  std::size_t dimension = 0;
  std::string scorer_id;
  std::string checkpoint;
};

/// Scorer output keyed by item id. Immutable after load.
class ScoreBundle {
 public:
  ScoreBundle() = default;
  ScoreBundle(ScoreProvenance provenance, std::map<std::string, ScoreEntry> entries);

  const ScoreProvenance& provenance() const { return provenance_; }
  const std::map<std::string, ScoreEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t dimension() const { return provenance_.dimension; }

  const ScoreEntry* find(const std::string& id) const;
  const ScoreEntry& at(const std::string& id) const;

 private:
  ScoreProvenance provenance_;
  std::map<std::string, ScoreEntry> entries_;
};

/// Parses a score file: a header record {dimension, scorer_id, checkpoint}
/// followed by {id, confidence[4], embedding[d]} records. Every id must
/// resolve to a corpus item.
ScoreBundle parse_scores(std::istream& in, const Corpus& corpus);
ScoreBundle load_scores(const std::filesystem::path& path, const Corpus& corpus);

/// Pulls the same line-delimited schema over HTTP(S) with a GET.
ScoreBundle fetch_scores(const std::string& url, const Corpus& corpus);

/// Serializes in corpus order when `corpus` is given, else in id order.
std::string dump_scores(const ScoreBundle& bundle, const Corpus* corpus = nullptr);
void write_scores(const std::filesystem::path& path, const ScoreBundle& bundle,
                  const Corpus* corpus = nullptr);

/// Uniform confidences and zero embeddings of `dimension` for every item.
ScoreBundle uniform_fallback(const Corpus& corpus, std::size_t dimension = 8);

/// Throws ValidationError naming the first corpus item without scores.
void require_coverage(const ScoreBundle& bundle, const Corpus& corpus);

}  // namespace mstage
