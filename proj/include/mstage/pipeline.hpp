#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mstage/clustering.hpp"
#include "mstage/config.hpp"
#include "mstage/cot_engine.hpp"
#include "mstage/evaluator.hpp"
#include "mstage/llm_client.hpp"
#include "mstage/prompt_builder.hpp"
#include "mstage/score_bridge.hpp"

namespace mstage {

enum class Stage { load, scores, cluster, chains, demos, prompts, completions, extraction, accuracy };

std::string_view to_string(Stage stage);

/// Stage-by-stage driver. Every stage persists its artifact under the output
/// directory; with `resume` set, an existing artifact is loaded instead of
/// recomputed unless the stage is listed in `force`.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::set<Stage> force = {});
  ~Pipeline();

  const RunConfig& config() const { return config_; }

  const Corpus& corpus();
  /// Clustering and demonstration pool; the evaluated corpus unless
  /// demo_corpus is set.
  const Corpus& demo_pool();
  const ScoreBundle& scores();
  const ClusterModel& clusters();
  /// Empty unless k was chosen by the elbow rule.
  const InertiaCurve& inertia_curve();
  const std::vector<ReasoningChain>& chains();
  const std::vector<Demonstration>& demonstrations();
  /// Warnings raised while sampling (skipped clusters).
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::vector<HeuristicPrompt> prompts(PromptMode mode, const std::filesystem::path& dir);
  std::vector<Prediction> predictions(PromptMode mode, const std::filesystem::path& dir);
  /// Runs the remaining stages for `mode` and writes report.txt, report.jsonl
  /// and the submission file under `dir`.
  EvalReport evaluate(PromptMode mode, const std::filesystem::path& dir);

  LlmClient& client();

  /// Writes manifest.json: the config snapshot plus SHA-256 of every artifact.
  void write_manifest(const std::string& command, const std::string& status = "ok");

  /// Writes the PCA scatter records (pca.jsonl) for the clustered pool.
  void write_pca(const std::filesystem::path& path);
  /// Writes "k<TAB>inertia" rows for k = 1..k_max.
  void write_inertia_curve(const std::filesystem::path& path, std::size_t k_max);

 private:
  bool reuse(Stage stage, const std::filesystem::path& artifact) const;
  const std::vector<ReasoningChain>& eval_chains();
  ChainCache& chain_cache();
  std::string mode_label(PromptMode mode) const;
  EmbeddingMatrix pool_embeddings();

  RunConfig config_;
  std::set<Stage> force_;
  std::optional<Corpus> corpus_;
  std::optional<Corpus> pool_;
  std::optional<ScoreBundle> scores_;
  std::optional<ClusterModel> clusters_;
  InertiaCurve curve_;
  std::optional<std::vector<ReasoningChain>> chains_;
  std::optional<std::vector<ReasoningChain>> eval_chains_;
  std::optional<std::vector<Demonstration>> demos_;
  std::vector<std::string> warnings_;
  std::unique_ptr<LlmClient> client_;
  std::unique_ptr<ChainCache> chain_cache_;
};

/// load -> scores -> cluster -> chains -> demos -> prompts -> completions ->
/// extraction -> accuracy for config.mode. Artifacts land in output_dir.
EvalReport run_pipeline(const RunConfig& config);

/// The four ablation modes sharing one set of upstream stages; per-mode
/// artifacts go to output_dir/<mode>/ and the comparison table to
/// output_dir/ablation.txt.
std::vector<EvalReport> run_ablation(const RunConfig& config);

inline constexpr PromptMode kAblationModes[] = {PromptMode::full, PromptMode::no_candidates,
                                                PromptMode::no_demonstrations,
                                                PromptMode::plain_zero_shot};

}  // namespace mstage
