#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mstage/cot_engine.hpp"
#include "mstage/dataset.hpp"
#include "mstage/llm_client.hpp"
#include "mstage/prompt_builder.hpp"

namespace mstage {

enum class Predictor { llm, scorer_argmax, rule_baseline };

std::string_view to_string(Predictor predictor);
std::optional<Predictor> parse_predictor(std::string_view text);

/// Everything a run needs. Serialized verbatim into every manifest so a
/// manifest can be fed back as a config file.
struct RunConfig {
  // Inputs and outputs.
  std::filesystem::path corpus;
  CorpusFormat corpus_format = CorpusFormat::line_records;
  Subtask subtask = Subtask::components;
  Split split = Split::validation;
  std::filesystem::path scores;  ///< file path or http(s) URL
  bool uniform_fallback = false;
  std::size_t fallback_dimension = 8;
  /// Pool for clustering and demonstrations; empty = the evaluated corpus.
  std::filesystem::path demo_corpus;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path output_dir = "out";

  // Prompting.
  PromptMode mode = PromptMode::full;
  SelectionStrategy strategy = SelectionStrategy::shortest_question;
  LengthMeasure length_measure = LengthMeasure::scalar_count;
  std::filesystem::path token_sidecar;
  CandidateStyle candidate_style = CandidateStyle::scores;
  std::string trigger = "Let's think step by step.";
  /// Suggestion sources for the reference_answer modes: scorer, rules, llm.
  std::vector<std::string> reference_sources = {"scorer"};
  int track = 1;
  Predictor predictor = Predictor::llm;
  bool dump_prompts = false;

  // Clustering.
  std::optional<std::size_t> k = 3;  ///< nullopt = elbow over 1..k_max
  std::size_t k_max = 8;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
  bool normalize_cosine = false;

  // LLM backend.
  std::string backend = "replay";  ///< replay | openai
  std::filesystem::path transcript;  ///< replay source, or where live calls are persisted
  HttpConfig http;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::size_t concurrency = 4;
  std::size_t retries = 3;

  /// Reuse persisted stage artifacts found in output_dir.
  bool resume = false;
};

nlohmann::json to_json(const RunConfig& config);
/// Accepts a bare config object or a manifest (reads its "config" member).
/// Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Throws ValidationError describing the first invalid field.
void validate(const RunConfig& config);

PromptStyle prompt_style(const RunConfig& config);

}  // namespace mstage
