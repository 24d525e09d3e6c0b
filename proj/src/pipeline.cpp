#include "mstage/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <sstream>
#include <thread>

#include "mstage/error.hpp"
#include "mstage/hash.hpp"
#include "mstage/jsonl.hpp"
#include "mstage/log.hpp"

namespace mstage {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

// Runs `fn`, re-tagging anything that is not already a pipeline Error.
template <typename Fn>
auto in_stage(Stage stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string(to_string(stage)), e.what());
  }
}

std::vector<Json> read_records(const fs::path& path, const std::string& stage) {
  std::vector<Json> out;
  jsonl::read_file(path, stage, [&](std::size_t, const Json& rec) { out.push_back(rec); });
  return out;
}

bool is_url(const fs::path& p) {
  const auto s = p.generic_string();
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0;
}

// Runs `work(i)` for i in [0, n) on up to `workers` threads.
template <typename Work>
void parallel_for(std::size_t n, std::size_t workers, Work&& work) {
  workers = std::min(std::max<std::size_t>(1, workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            work(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::load: return "dataset";
    case Stage::scores: return "score_bridge";
    case Stage::cluster: return "clustering";
    case Stage::chains: return "cot_engine";
    case Stage::demos: return "demonstrations";
    case Stage::prompts: return "prompt_builder";
    case Stage::completions: return "llm_client";
    case Stage::extraction: return "extraction";
    case Stage::accuracy: return "evaluator";
  }
  return "pipeline";
}

Pipeline::Pipeline(RunConfig config, std::set<Stage> force)
    : config_(std::move(config)), force_(std::move(force)) {
  validate(config_);
}

Pipeline::~Pipeline() = default;

bool Pipeline::reuse(Stage stage, const fs::path& artifact) const {
  return config_.resume && !force_.count(stage) && fs::exists(artifact);
}

const Corpus& Pipeline::corpus() {
  if (corpus_) return *corpus_;
  return in_stage(Stage::load, [&]() -> const Corpus& {
    LoadOptions opts{config_.subtask, config_.split};
    corpus_ = load_corpus(config_.corpus, config_.corpus_format, opts);
    write_corpus(config_.output_dir / "corpus.jsonl", *corpus_);
    log::info("loaded " + std::to_string(corpus_->size()) + " items from " +
              config_.corpus.string());
    return *corpus_;
  });
}

const Corpus& Pipeline::demo_pool() {
  if (pool_) return *pool_;
  if (config_.demo_corpus.empty()) {
    pool_ = corpus();
    return *pool_;
  }
  return in_stage(Stage::load, [&]() -> const Corpus& {
    LoadOptions opts{config_.subtask, config_.split};
    pool_ = load_corpus(config_.demo_corpus, config_.corpus_format, opts);
    return *pool_;
  });
}

const ScoreBundle& Pipeline::scores() {
  if (scores_) return *scores_;
  return in_stage(Stage::scores, [&]() -> const ScoreBundle& {
    // The bundle must cover both the evaluated items and the demo pool.
    std::vector<MCQItem> items = corpus().items();
    for (const auto& item : demo_pool()) {
      if (!corpus().contains(item.id)) items.push_back(item);
    }
    const Corpus all(std::move(items), "combined");
    const fs::path artifact = config_.output_dir / "scores.jsonl";
    if (reuse(Stage::scores, artifact)) {
      scores_ = load_scores(artifact, all);
    } else if (config_.uniform_fallback) {
      scores_ = uniform_fallback(all, config_.fallback_dimension);
    } else if (config_.scores.empty()) {
      throw ValidationError("score_bridge",
                            "no score file given; pass --scores or --uniform-fallback");
    } else if (is_url(config_.scores)) {
      scores_ = fetch_scores(config_.scores.generic_string(), all);
    } else {
      if (!fs::exists(config_.scores)) {
        throw ValidationError("score_bridge", "score file not found: " + config_.scores.string());
      }
      scores_ = load_scores(config_.scores, all);
    }
    require_coverage(*scores_, all);
    write_scores(artifact, *scores_, &all);
    return *scores_;
  });
}

EmbeddingMatrix Pipeline::pool_embeddings() {
  auto m = embeddings_for(demo_pool(), scores());
  return config_.normalize_cosine ? m.normalized() : m;
}

const ClusterModel& Pipeline::clusters() {
  if (clusters_) return *clusters_;
  return in_stage(Stage::cluster, [&]() -> const ClusterModel& {
    const EmbeddingMatrix data = pool_embeddings();
    const fs::path artifact = config_.output_dir / "clusters.json";
    if (reuse(Stage::cluster, artifact)) {
      const Json doc = Json::parse(jsonl::read_text(artifact));
      ClusterModel m;
      m.k = doc.at("k").get<std::size_t>();
      m.dimension = data.dimension();
      m.seed = doc.at("seed").get<std::uint64_t>();
      m.inertia = doc.at("inertia").get<double>();
      m.iterations = doc.at("iterations").get<std::size_t>();
      m.converged = doc.at("converged").get<bool>();
      for (const auto& c : doc.at("centroids")) {
        auto v = c.get<std::vector<double>>();
        m.centroids.insert(m.centroids.end(), v.begin(), v.end());
      }
      const auto& assignment = doc.at("assignment");
      for (std::size_t i = 0; i < data.rows(); ++i) {
        m.ids.push_back(data.ids()[i]);
        auto r = data.row(i);
        m.points.insert(m.points.end(), r.begin(), r.end());
        m.assignment.push_back(assignment.at(data.ids()[i]).get<std::size_t>());
      }
      if (doc.contains("inertia_curve")) {
        for (const auto& p : doc["inertia_curve"]) {
          curve_.push_back({p.at(0).get<std::size_t>(), p.at(1).get<double>()});
        }
      }
      clusters_ = std::move(m);
      return *clusters_;
    }

    const std::size_t distinct = data.distinct_rows();
    KMeansOptions opts;
    opts.seed = config_.seed;
    opts.restarts = config_.restarts;
    if (config_.k) {
      opts.k = std::min(*config_.k, distinct);
      if (opts.k < *config_.k) {
        log::warn("k clamped from " + std::to_string(*config_.k) + " to " +
                  std::to_string(opts.k) + " distinct embeddings");
      }
    } else {
      const std::size_t k_max = std::min(config_.k_max, distinct);
      if (k_max >= 3) {
        curve_ = mstage::inertia_curve(data, k_max, opts);
        opts.k = elbow_select(curve_);
      } else {
        opts.k = k_max;
        log::warn("too few distinct embeddings for the elbow rule; using k = " +
                  std::to_string(k_max));
      }
    }
    clusters_ = kmeans(data, opts);

    Json doc;
    doc["k"] = clusters_->k;
    doc["seed"] = clusters_->seed;
    doc["restarts"] = opts.restarts;
    doc["inertia"] = clusters_->inertia;
    doc["iterations"] = clusters_->iterations;
    doc["converged"] = clusters_->converged;
    doc["centroids"] = Json::array();
    for (std::size_t c = 0; c < clusters_->k; ++c) {
      auto cen = clusters_->centroid(c);
      doc["centroids"].push_back(std::vector<double>(cen.begin(), cen.end()));
    }
    doc["assignment"] = Json::object();
    std::vector<Json> rows;
    for (std::size_t i = 0; i < clusters_->ids.size(); ++i) {
      doc["assignment"][clusters_->ids[i]] = clusters_->assignment[i];
      rows.push_back(Json{{"id", clusters_->ids[i]}, {"cluster", clusters_->assignment[i]}});
    }
    if (!curve_.empty()) {
      doc["inertia_curve"] = Json::array();
      std::string tsv = "k\tinertia\n";
      for (const auto& p : curve_) {
        doc["inertia_curve"].push_back(Json::array({p.k, p.inertia}));
        tsv += std::to_string(p.k) + "\t" + Json(p.inertia).dump() + "\n";
      }
      jsonl::write_text(config_.output_dir / "inertia.tsv", tsv);
    }
    jsonl::write_text(artifact, doc.dump(2) + "\n");
    jsonl::write_file(config_.output_dir / "cluster_assignments.jsonl", rows);
    return *clusters_;
  });
}

const InertiaCurve& Pipeline::inertia_curve() {
  clusters();
  return curve_;
}

void Pipeline::write_pca(const fs::path& path) {
  in_stage(Stage::cluster, [&] {
    const auto& model = clusters();
    const auto proj = pca_project(pool_embeddings());
    std::vector<Json> rows;
    rows.push_back(Json{{"variance_ratio", proj.variance_ratio}});
    for (std::size_t i = 0; i < proj.ids.size(); ++i) {
      rows.push_back(Json{{"id", proj.ids[i]},
                          {"cluster", model.assignment[i]},
                          {"x", proj.coordinates[i][0]},
                          {"y", proj.coordinates[i][1]}});
    }
    jsonl::write_file(path, rows);
  });
}

void Pipeline::write_inertia_curve(const fs::path& path, std::size_t k_max) {
  in_stage(Stage::cluster, [&] {
    const auto data = pool_embeddings();
    KMeansOptions opts;
    opts.seed = config_.seed;
    opts.restarts = config_.restarts;
    const auto curve = mstage::inertia_curve(data, std::min(k_max, data.distinct_rows()), opts);
    std::string tsv = "k\tinertia\n";
    for (const auto& p : curve) tsv += std::to_string(p.k) + "\t" + Json(p.inertia).dump() + "\n";
    jsonl::write_text(path, tsv);
  });
}

LlmClient& Pipeline::client() {
  if (client_) return *client_;
  return in_stage(Stage::completions, [&]() -> LlmClient& {
    const fs::path transcript =
        config_.transcript.empty() ? config_.cache_dir / "transcript.jsonl" : config_.transcript;
    std::unique_ptr<ChatBackend> backend;
    std::shared_ptr<TranscriptCache> cache;
    if (config_.backend == "replay") {
      backend = std::make_unique<ReplayBackend>(transcript);
    } else {
      backend = std::make_unique<OpenAIBackend>(config_.http);
      cache = std::make_shared<TranscriptCache>(transcript);
    }
    RetryPolicy retry;
    retry.attempts = config_.retries;
    client_ = std::make_unique<LlmClient>(std::move(backend), cache, retry, config_.concurrency);
    client_->default_decoding = {config_.temperature, config_.max_tokens};
    return *client_;
  });
}

ChainCache& Pipeline::chain_cache() {
  if (!chain_cache_) chain_cache_ = std::make_unique<ChainCache>(config_.cache_dir / "chains.jsonl");
  return *chain_cache_;
}

const std::vector<ReasoningChain>& Pipeline::chains() {
  if (chains_) return *chains_;
  return in_stage(Stage::chains, [&]() -> const std::vector<ReasoningChain>& {
    const fs::path artifact = config_.output_dir / "chains.jsonl";
    if (reuse(Stage::chains, artifact)) {
      std::vector<ReasoningChain> loaded;
      for (const auto& rec : read_records(artifact, "cot_engine")) {
        loaded.push_back(chain_from_json(rec));
      }
      chains_ = std::move(loaded);
      return *chains_;
    }
    ChainOptions opts;
    opts.style = prompt_style(config_);
    opts.decoding = {config_.temperature, config_.max_tokens};
    opts.concurrency = config_.concurrency;
    chains_ = generate_chains(demo_pool(), client(), &chain_cache(), opts);
    std::vector<Json> rows;
    for (const auto& c : *chains_) rows.push_back(to_json(c));
    jsonl::write_file(artifact, rows);
    return *chains_;
  });
}

const std::vector<ReasoningChain>& Pipeline::eval_chains() {
  if (config_.demo_corpus.empty()) return chains();
  if (eval_chains_) return *eval_chains_;
  return in_stage(Stage::chains, [&]() -> const std::vector<ReasoningChain>& {
    ChainOptions opts;
    opts.style = prompt_style(config_);
    opts.decoding = {config_.temperature, config_.max_tokens};
    opts.concurrency = config_.concurrency;
    eval_chains_ = generate_chains(corpus(), client(), &chain_cache(), opts);
    return *eval_chains_;
  });
}

const std::vector<Demonstration>& Pipeline::demonstrations() {
  if (demos_) return *demos_;
  return in_stage(Stage::demos, [&]() -> const std::vector<Demonstration>& {
    const fs::path artifact = config_.output_dir / "demos.jsonl";
    if (reuse(Stage::demos, artifact)) {
      std::vector<Demonstration> loaded;
      for (const auto& rec : read_records(artifact, "demonstrations")) {
        loaded.push_back(demonstration_from_json(rec));
      }
      demos_ = std::move(loaded);
      return *demos_;
    }
    std::optional<TokenSidecar> sidecar;
    if (!config_.token_sidecar.empty()) sidecar.emplace(config_.token_sidecar);
    SampleOptions opts{config_.strategy, config_.length_measure, sidecar ? &*sidecar : nullptr};
    demos_ = sample_demonstrations(clusters(), chains(), demo_pool(), opts, &warnings_);

    std::vector<Json> rows;
    std::string text;
    const auto style = prompt_style(config_);
    for (std::size_t i = 0; i < demos_->size(); ++i) {
      const auto& d = (*demos_)[i];
      rows.push_back(to_json(d));
      text += "# demonstration " + std::to_string(i + 1) + " (item " + d.item_id + ", cluster " +
              std::to_string(clusters().cluster_of(d.item_id)) + ")\n";
      text += render_demonstration(d, style) + "\n\n";
    }
    jsonl::write_file(artifact, rows);
    jsonl::write_text(config_.output_dir / "demonstrations.txt", text);
    return *demos_;
  });
}

std::string Pipeline::mode_label(PromptMode mode) const {
  if (config_.predictor != Predictor::llm) return std::string(to_string(config_.predictor));
  return std::string(to_string(mode));
}

std::vector<HeuristicPrompt> Pipeline::prompts(PromptMode mode, const fs::path& dir) {
  const bool needs_demos = mode == PromptMode::full || mode == PromptMode::no_candidates;
  const bool reference = mode == PromptMode::reference_answer ||
                         mode == PromptMode::reference_answer_with_reasons;
  const auto& items = corpus();
  const auto& bundle = scores();
  std::span<const Demonstration> demos;
  if (needs_demos) demos = demonstrations();
  std::map<std::string, const ReasoningChain*> llm_chains;
  if (reference && std::count(config_.reference_sources.begin(), config_.reference_sources.end(),
                              std::string("llm"))) {
    for (const auto& c : eval_chains()) llm_chains[c.item_id] = &c;
  }

  return in_stage(Stage::prompts, [&] {
    const auto style = prompt_style(config_);
    std::vector<HeuristicPrompt> out;
    std::vector<Json> rows;
    for (const auto& item : items) {
      std::vector<Suggestion> suggestions;
      if (reference) {
        for (const auto& src : config_.reference_sources) {
          if (src == "scorer") {
            suggestions.push_back(
                {"scorer", argmax_label(bundle.at(item.id).confidence.scores()), ""});
          } else if (src == "rules") {
            if (auto l = rule_baseline(item)) suggestions.push_back({"rules", *l, ""});
          } else if (src == "llm") {
            auto it = llm_chains.find(item.id);
            if (it != llm_chains.end() && it->second->extracted) {
              suggestions.push_back({"llm", *it->second->extracted, it->second->chain_text});
            }
          }
        }
      }
      PromptMode effective = mode;
      if (reference && suggestions.empty()) {
        log::warn("no suggestion available for " + item.id + "; using plain_zero_shot");
        effective = PromptMode::plain_zero_shot;
      }
      auto prompt = build_prompt(item, demos, bundle.at(item.id).confidence, effective, style,
                                 suggestions);
      rows.push_back(Json{{"item_id", item.id},
                          {"mode", std::string(to_string(effective))},
                          {"prompt_hash", prompt_hash(prompt.text)},
                          {"demonstration_ids", prompt.demonstration_ids},
                          {"text", prompt.text}});
      if (config_.dump_prompts) jsonl::write_text(dir / "prompts" / (item.id + ".txt"), prompt.text);
      out.push_back(std::move(prompt));
    }
    jsonl::write_file(dir / "prompts.jsonl", rows);
    return out;
  });
}

std::vector<Prediction> Pipeline::predictions(PromptMode mode, const fs::path& dir) {
  const fs::path artifact = dir / "predictions.jsonl";
  if (reuse(Stage::extraction, artifact)) {
    std::vector<Prediction> loaded;
    for (const auto& rec : read_records(artifact, "extraction")) {
      loaded.push_back(prediction_from_json(rec));
    }
    return loaded;
  }

  std::vector<Prediction> preds;
  if (config_.predictor == Predictor::scorer_argmax) {
    preds = in_stage(Stage::extraction, [&] { return scorer_argmax(scores(), corpus()); });
  } else if (config_.predictor == Predictor::rule_baseline) {
    preds = in_stage(Stage::extraction, [&] { return rule_predictions(corpus()); });
  } else {
    const auto prompts_for_mode = prompts(mode, dir);
    const fs::path completions_path = dir / "completions.jsonl";
    std::map<std::pair<std::string, std::string>, std::string> previous;
    if (reuse(Stage::completions, completions_path)) {
      for (const auto& rec : read_records(completions_path, "llm_client")) {
        if (rec.contains("error")) continue;
        previous[{rec.at("item_id").get<std::string>(), rec.at("prompt_hash").get<std::string>()}] =
            rec.at("response_text").get<std::string>();
      }
    }
    std::vector<Json> rows(prompts_for_mode.size());
    std::vector<std::optional<std::string>> texts(prompts_for_mode.size());
    auto& llm = client();
    in_stage(Stage::completions, [&] {
      parallel_for(prompts_for_mode.size(), config_.concurrency, [&](std::size_t i) {
        const auto& p = prompts_for_mode[i];
        const auto hash = prompt_hash(p.text);
        Json row{{"item_id", p.item_id}, {"prompt_hash", hash}};
        if (auto it = previous.find({p.item_id, hash}); it != previous.end()) {
          texts[i] = it->second;
        } else {
          try {
            texts[i] = llm.complete({p.text, llm.default_decoding, p.item_id + "/" +
                                                                       std::string(to_string(mode))})
                           .text;
          } catch (const AuthError&) {
            throw;
          } catch (const Error& e) {
            log::warn("completion failed for " + p.item_id + ": " + e.what());
            row["error"] = e.what();
          }
        }
        if (texts[i]) row["response_text"] = *texts[i];
        rows[i] = std::move(row);
      });
    });
    jsonl::write_file(completions_path, rows);

    for (std::size_t i = 0; i < prompts_for_mode.size(); ++i) {
      std::optional<OptionLabel> label;
      if (texts[i]) label = extract_answer(*texts[i]);
      preds.push_back({prompts_for_mode[i].item_id, mode_label(mode), label, PredictionSource::llm});
    }
  }
  std::vector<Json> rows;
  for (const auto& p : preds) rows.push_back(to_json(p));
  jsonl::write_file(artifact, rows);
  return preds;
}

EvalReport Pipeline::evaluate(PromptMode mode, const fs::path& dir) {
  const auto preds = predictions(mode, dir);
  return in_stage(Stage::accuracy, [&] {
    EvalReport report = accuracy(preds, corpus(), mode_label(mode));
    jsonl::write_text(dir / "report.txt", report.render_table());
    jsonl::write_text(dir / "report.jsonl", report.render_records());
    jsonl::write_text(dir / ("submission_track" + std::to_string(config_.track) + ".csv"),
                      render_submission(preds, corpus()));
    return report;
  });
}

void Pipeline::write_manifest(const std::string& command, const std::string& status) {
  Json doc;
  doc["command"] = command;
  doc["status"] = status;
  doc["config"] = to_json(config_);
  doc["artifacts"] = Json::object();
  std::vector<fs::path> files;
  if (fs::exists(config_.output_dir)) {
    for (const auto& entry : fs::recursive_directory_iterator(config_.output_dir)) {
      if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    doc["artifacts"][fs::relative(f, config_.output_dir).generic_string()] = sha256_file(f);
  }
  jsonl::write_text(config_.output_dir / "manifest.json", doc.dump(2) + "\n");
}

EvalReport run_pipeline(const RunConfig& config) {
  Pipeline pipeline(config);
  auto report = pipeline.evaluate(config.mode, config.output_dir);
  pipeline.write_manifest("run");
  return report;
}

std::vector<EvalReport> run_ablation(const RunConfig& config) {
  Pipeline pipeline(config);
  std::vector<EvalReport> reports;
  for (auto mode : kAblationModes) {
    reports.push_back(pipeline.evaluate(mode, config.output_dir / std::string(to_string(mode))));
  }
  jsonl::write_text(config.output_dir / "ablation.txt", render_comparison(reports));
  pipeline.write_manifest("ablate");
  return reports;
}

}  // namespace mstage
