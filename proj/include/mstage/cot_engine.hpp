#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mstage/clustering.hpp"
#include "mstage/dataset.hpp"
#include "mstage/demonstration.hpp"
#include "mstage/llm_client.hpp"
#include "mstage/prompt_builder.hpp"

namespace mstage {

struct ReasoningChain {
  std::string item_id;
  std::string prompt_hash;
  std::string backend;
  std::string chain_text;
  std::optional<OptionLabel> extracted;
  bool valid = false;   ///< extracted answer equals the gold label
  bool failed = false;  ///< the client gave up; chain_text holds the error
};

enum class SelectionStrategy { shortest_question, shortest_chain, cluster_center, shortest_both };

std::string_view to_string(SelectionStrategy strategy);
std::optional<SelectionStrategy> parse_selection_strategy(std::string_view text);

enum class LengthMeasure { scalar_count, token_count };

std::optional<LengthMeasure> parse_length_measure(std::string_view text);

/// Per-item token counts produced by the scorer's tokenizer. Line-delimited
/// {id, tokens} records.
class TokenSidecar {
 public:
  TokenSidecar() = default;
  explicit TokenSidecar(const std::filesystem::path& path);
  explicit TokenSidecar(std::map<std::string, std::size_t> counts) : counts_(std::move(counts)) {}

  std::optional<std::size_t> find(const std::string& id) const;

 private:
  std::map<std::string, std::size_t> counts_;
};

/// Length of the question text: Unicode scalar values, or the sidecar's token
/// count. token_count without a sidecar (or without an entry) throws.
std::size_t question_length(const MCQItem& item, LengthMeasure measure,
                            const TokenSidecar* sidecar = nullptr);

/// On-disk chain cache keyed by (item id, prompt hash, backend id).
class ChainCache {
 public:
  ChainCache() = default;
  explicit ChainCache(std::filesystem::path path);

  std::optional<ReasoningChain> find(const std::string& item_id, const std::string& hash,
                                     const std::string& backend) const;
  void record(const ReasoningChain& chain);
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<Key, ReasoningChain> entries_;
};

nlohmann::json to_json(const ReasoningChain& chain);
ReasoningChain chain_from_json(const nlohmann::json& rec);

struct ChainOptions {
  PromptStyle style;
  DecodingParams decoding;
  std::size_t concurrency = 4;
};

/// The zero-shot reasoning prompt: question, options and the trigger phrase.
std::string zero_shot_prompt(const MCQItem& item, const PromptStyle& style = {});

/// One chain per corpus item, in corpus order. Client failures mark the item
/// failed and the run continues; failed chains are not cached.
std::vector<ReasoningChain> generate_chains(const Corpus& corpus, LlmClient& client,
                                            ChainCache* cache, const ChainOptions& options = {});

struct SampleOptions {
  SelectionStrategy strategy = SelectionStrategy::shortest_question;
  LengthMeasure measure = LengthMeasure::scalar_count;
  const TokenSidecar* sidecar = nullptr;
};

/// At most one demonstration per cluster, in cluster order, drawn from
/// members whose chain is valid. Ties go to the smallest item id. Clusters
/// without a valid chain are skipped and reported through `warnings`.
std::vector<Demonstration> sample_demonstrations(const ClusterModel& model,
                                                 const std::vector<ReasoningChain>& chains,
                                                 const Corpus& corpus,
                                                 const SampleOptions& options = {},
                                                 std::vector<std::string>* warnings = nullptr);

nlohmann::json to_json(const Demonstration& demo);
Demonstration demonstration_from_json(const nlohmann::json& rec);

}  // namespace mstage
