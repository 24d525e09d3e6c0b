// Command-line front end: one subcommand per pipeline stage plus end-to-end
// run/ablate. Every invocation leaves a manifest.json in the output directory.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mstage/config.hpp"
#include "mstage/error.hpp"
#include "mstage/jsonl.hpp"
#include "mstage/log.hpp"
#include "mstage/pipeline.hpp"

namespace {

using namespace mstage;
namespace fs = std::filesystem;

// Flags as given on the command line; unset ones leave the config file (or
// the built-in default) alone.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> corpus, format, subtask, split, scores, demo_corpus, cache_dir,
      output_dir, mode, strategy, length_measure, token_sidecar, candidate_style, trigger,
      predictor, k, normalize, backend, transcript, base_url, model, api_key_env;
  std::optional<std::size_t> fallback_dim, k_max, restarts, concurrency, retries;
  std::optional<std::uint64_t> seed;
  std::optional<int> track, max_tokens, timeout;
  std::optional<double> temperature;
  std::vector<std::string> reference_sources;
  std::vector<std::string> force;
  bool uniform_fallback = false;
  bool dump_prompts = false;
  bool resume = false;
  std::optional<std::string> plot_inertia, plot_pca;
  std::string log_level = "warn";
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file (or a previous manifest.json)");
  cmd->add_option("--corpus", f.corpus, "Corpus file");
  cmd->add_option("--format", f.format, "Corpus format: jsonl | task-native");
  cmd->add_option("--subtask", f.subtask, "Default subtask: generation | components");
  cmd->add_option("--split", f.split, "Default split: train | validation | test");
  cmd->add_option("--scores", f.scores, "Score file path or http(s) URL");
  cmd->add_flag("--uniform-fallback", f.uniform_fallback,
                "Use uniform confidences and zero embeddings instead of a score file");
  cmd->add_option("--fallback-dim", f.fallback_dim, "Embedding dimension for --uniform-fallback");
  cmd->add_option("--demo-corpus", f.demo_corpus,
                  "Corpus used for clustering and demonstrations (default: --corpus)");
  cmd->add_option("--cache-dir", f.cache_dir, "Chain and transcript cache directory");
  cmd->add_option("--output-dir", f.output_dir, "Artifact directory");
  cmd->add_option("--mode", f.mode,
                  "Prompt mode: full | no_candidates | no_demonstrations | plain_zero_shot | "
                  "reference_answer | reference_answer_with_reasons");
  cmd->add_option("--strategy", f.strategy,
                  "Demonstration selection: shortest_question | shortest_chain | "
                  "cluster_center | shortest_both");
  cmd->add_option("--length-measure", f.length_measure, "scalar_count | token_count");
  cmd->add_option("--token-sidecar", f.token_sidecar, "Per-item token counts ({id, tokens})");
  cmd->add_option("--candidate-style", f.candidate_style, "scores | ranked");
  cmd->add_option("--trigger", f.trigger, "Chain-of-thought trigger phrase");
  cmd->add_option("--reference-source", f.reference_sources,
                  "Suggestion source for reference modes: scorer | rules | llm (repeatable)");
  cmd->add_option("--track", f.track, "Shared-task track (1 adds the answer-format line)");
  cmd->add_option("--predictor", f.predictor, "llm | scorer_argmax | rule_baseline");
  cmd->add_flag("--dump-prompts", f.dump_prompts, "Write every prompt to prompts/<id>.txt");
  cmd->add_option("--k", f.k, "Number of clusters, or 'auto' for the elbow rule");
  cmd->add_option("--k-max", f.k_max, "Largest k tried by --k auto");
  cmd->add_option("--seed", f.seed, "Clustering seed");
  cmd->add_option("--restarts", f.restarts, "k-means restarts");
  cmd->add_option("--normalize", f.normalize, "Embedding preprocessing: none | cosine");
  cmd->add_option("--backend", f.backend, "LLM backend: replay | openai");
  cmd->add_option("--transcript", f.transcript,
                  "Replay transcript, or where live responses are recorded");
  cmd->add_option("--base-url", f.base_url, "Chat-completions base URL");
  cmd->add_option("--model", f.model, "Model name");
  cmd->add_option("--api-key-env", f.api_key_env, "Environment variable holding the API key");
  cmd->add_option("--timeout", f.timeout, "HTTP timeout in seconds");
  cmd->add_option("--temperature", f.temperature, "Sampling temperature");
  cmd->add_option("--max-tokens", f.max_tokens, "Maximum completion length");
  cmd->add_option("--concurrency", f.concurrency, "Concurrent LLM requests");
  cmd->add_option("--retries", f.retries, "Attempts per LLM request");
  cmd->add_flag("--resume", f.resume, "Reuse stage artifacts already in --output-dir");
  cmd->add_option("--force", f.force,
                  "Recompute these stages even with --resume: load | scores | cluster | "
                  "chains | demos | prompts | completions | extraction | accuracy");
  cmd->add_option("--plot-inertia", f.plot_inertia, "Write k<TAB>inertia rows to this file");
  cmd->add_option("--plot-pca", f.plot_pca, "Write PCA scatter records to this file");
  cmd->add_option("--log-level", f.log_level, "debug | info | warn | error | off");
}

template <typename T, typename Parse>
T parse_or_throw(const std::string& text, const char* what, Parse parse) {
  auto v = parse(text);
  if (!v) throw ValidationError("config", std::string("invalid ") + what + ": " + text);
  return *v;
}

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config ? load_config(*f.config) : RunConfig{};
  if (f.corpus) c.corpus = *f.corpus;
  if (f.format) c.corpus_format = parse_or_throw<CorpusFormat>(*f.format, "format", parse_corpus_format);
  if (f.subtask) c.subtask = parse_or_throw<Subtask>(*f.subtask, "subtask", parse_subtask);
  if (f.split) c.split = parse_or_throw<Split>(*f.split, "split", parse_split);
  if (f.scores) c.scores = *f.scores;
  if (f.uniform_fallback) c.uniform_fallback = true;
  if (f.fallback_dim) c.fallback_dimension = *f.fallback_dim;
  if (f.demo_corpus) c.demo_corpus = *f.demo_corpus;
  if (f.cache_dir) c.cache_dir = *f.cache_dir;
  if (f.output_dir) c.output_dir = *f.output_dir;
  if (f.mode) c.mode = parse_or_throw<PromptMode>(*f.mode, "mode", parse_prompt_mode);
  if (f.strategy) {
    c.strategy = parse_or_throw<SelectionStrategy>(*f.strategy, "strategy", parse_selection_strategy);
  }
  if (f.length_measure) {
    c.length_measure =
        parse_or_throw<LengthMeasure>(*f.length_measure, "length measure", parse_length_measure);
  }
  if (f.token_sidecar) c.token_sidecar = *f.token_sidecar;
  if (f.candidate_style) {
    c.candidate_style =
        parse_or_throw<CandidateStyle>(*f.candidate_style, "candidate style", parse_candidate_style);
  }
  if (f.trigger) c.trigger = *f.trigger;
  if (!f.reference_sources.empty()) c.reference_sources = f.reference_sources;
  if (f.track) c.track = *f.track;
  if (f.predictor) c.predictor = parse_or_throw<Predictor>(*f.predictor, "predictor", parse_predictor);
  if (f.dump_prompts) c.dump_prompts = true;
  if (f.k) {
    if (*f.k == "auto") {
      c.k.reset();
    } else {
      try {
        std::size_t pos = 0;
        const long v = std::stol(*f.k, &pos);
        if (pos != f.k->size() || v < 1) throw std::invalid_argument("k");
        c.k = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw ValidationError("config", "--k must be a positive integer or 'auto': " + *f.k);
      }
    }
  }
  if (f.k_max) c.k_max = *f.k_max;
  if (f.seed) c.seed = *f.seed;
  if (f.restarts) c.restarts = *f.restarts;
  if (f.normalize) {
    if (*f.normalize != "cosine" && *f.normalize != "none") {
      throw ValidationError("config", "--normalize must be cosine or none");
    }
    c.normalize_cosine = *f.normalize == "cosine";
  }
  if (f.backend) c.backend = *f.backend;
  if (f.transcript) c.transcript = *f.transcript;
  if (f.base_url) c.http.base_url = *f.base_url;
  if (f.model) c.http.model_name = *f.model;
  if (f.api_key_env) c.http.api_key_env = *f.api_key_env;
  if (f.timeout) c.http.timeout_seconds = *f.timeout;
  if (f.temperature) c.temperature = *f.temperature;
  if (f.max_tokens) c.max_tokens = *f.max_tokens;
  if (f.concurrency) c.concurrency = *f.concurrency;
  if (f.retries) c.retries = *f.retries;
  if (f.resume) c.resume = true;
  validate(c);
  return c;
}

std::set<Stage> parse_force(const std::vector<std::string>& names) {
  std::set<Stage> out;
  static const std::pair<const char*, Stage> kNames[] = {
      {"load", Stage::load},           {"scores", Stage::scores},
      {"cluster", Stage::cluster},     {"chains", Stage::chains},
      {"demos", Stage::demos},         {"prompts", Stage::prompts},
      {"completions", Stage::completions}, {"extraction", Stage::extraction},
      {"accuracy", Stage::accuracy}};
  for (const auto& n : names) {
    bool found = false;
    for (const auto& [name, stage] : kNames) {
      if (n == name) {
        out.insert(stage);
        found = true;
      }
    }
    if (!found) throw ValidationError("config", "unknown stage for --force: " + n);
  }
  return out;
}

log::Level parse_level(const std::string& s) {
  if (s == "debug") return log::Level::debug;
  if (s == "info") return log::Level::info;
  if (s == "warn") return log::Level::warn;
  if (s == "error") return log::Level::error;
  if (s == "off") return log::Level::off;
  throw ValidationError("config", "invalid --log-level: " + s);
}

void print_report(const EvalReport& r) { std::cout << r.render_table(); }

void emit_plots(Pipeline& p, const Flags& f) {
  if (f.plot_inertia) p.write_inertia_curve(*f.plot_inertia, p.config().k_max);
  if (f.plot_pca) p.write_pca(*f.plot_pca);
}

// Subcommand bodies. Each receives a ready pipeline.
void cmd_ingest(Pipeline& p, double fraction, std::uint64_t split_seed) {
  const Corpus& corpus = p.corpus();
  const auto& meta = corpus.metadata();
  std::cout << "items\t" << corpus.size() << "\n";
  for (const auto& [split, n] : meta.split_counts) {
    std::cout << "split:" << to_string(split) << "\t" << n << "\n";
  }
  std::cout << "unlabeled\t" << meta.unlabeled << "\n";
  if (fraction > 0.0) {
    auto [train, holdout] = split_corpus(corpus, fraction, split_seed);
    write_corpus(p.config().output_dir / "train.jsonl", train);
    write_corpus(p.config().output_dir / "holdout.jsonl", holdout);
    std::cout << "train\t" << train.size() << "\nholdout\t" << holdout.size() << "\n";
  }
}

void cmd_cluster(Pipeline& p, const Flags& f) {
  const auto& m = p.clusters();
  std::cout << "k\t" << m.k << "\ninertia\t" << nlohmann::json(m.inertia).dump() << "\n";
  for (std::size_t c = 0; c < m.k; ++c) {
    std::cout << "cluster " << c << "\t" << m.members(c).size() << " members\n";
  }
  for (const auto& pt : p.inertia_curve()) {
    std::cout << "curve k=" << pt.k << "\t" << nlohmann::json(pt.inertia).dump() << "\n";
  }
  emit_plots(p, f);
}

void cmd_gen_cot(Pipeline& p) {
  std::size_t valid = 0, failed = 0;
  for (const auto& c : p.chains()) {
    valid += c.valid;
    failed += c.failed;
  }
  std::cout << "chains\t" << p.chains().size() << "\nvalid\t" << valid << "\nfailed\t" << failed
            << "\n";
}

void cmd_sample_demos(Pipeline& p, const Flags& f) {
  for (const auto& d : p.demonstrations()) {
    std::cout << "demonstration\t" << d.item_id << "\t" << to_char(d.answer) << "\n";
  }
  for (const auto& w : p.warnings()) std::cerr << "warning: " << w << "\n";
  emit_plots(p, f);
}

void cmd_build_prompts(Pipeline& p) {
  const auto prompts = p.prompts(p.config().mode, p.config().output_dir);
  std::cout << "prompts\t" << prompts.size() << "\n";
}

void cmd_report(const RunConfig& config) {
  // Re-scores persisted predictions: the run directory itself plus any
  // per-mode ablation subdirectories.
  Pipeline p(config);
  std::vector<EvalReport> reports;
  auto score_dir = [&](const fs::path& dir, const std::string& fallback_mode) {
    const fs::path preds_path = dir / "predictions.jsonl";
    if (!fs::exists(preds_path)) return;
    std::vector<Prediction> preds;
    jsonl::read_file(preds_path, "evaluator", [&](std::size_t, const nlohmann::json& rec) {
      preds.push_back(prediction_from_json(rec));
    });
    const std::string mode = preds.empty() ? fallback_mode : preds.front().mode;
    reports.push_back(accuracy(preds, p.corpus(), mode));
  };
  score_dir(config.output_dir, std::string(to_string(config.mode)));
  for (auto mode : kAblationModes) {
    score_dir(config.output_dir / std::string(to_string(mode)), std::string(to_string(mode)));
  }
  if (reports.empty()) {
    throw ValidationError("evaluator",
                          "no predictions.jsonl under " + config.output_dir.string());
  }
  for (const auto& r : reports) print_report(r);
  if (reports.size() > 1) std::cout << render_comparison(reports);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heuristic-enhanced prompting pipeline for four-option metaphor questions"};
  app.require_subcommand(1, 1);
  Flags flags;
  double split_fraction = 0.0;
  std::uint64_t split_seed = 0;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"ingest", "Load and validate a corpus; optionally write a train/holdout split"},
      {"score-import", "Validate a score file (or URL) against the corpus and persist it"},
      {"cluster", "Cluster question embeddings (fixed k or elbow rule)"},
      {"gen-cot", "Generate zero-shot reasoning chains"},
      {"sample-demos", "Pick one validated demonstration per cluster"},
      {"build-prompts", "Render prompts for --mode"},
      {"run", "Run every stage for --mode and write the report"},
      {"ablate", "Run full, no_candidates, no_demonstrations and plain_zero_shot"},
      {"report", "Re-score persisted predictions"},
  };
  std::map<std::string, CLI::App*> cmds;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, flags);
    cmds[s.name] = cmd;
  }
  cmds["ingest"]->add_option("--split-fraction", split_fraction,
                             "Write train.jsonl/holdout.jsonl with this train fraction");
  cmds["ingest"]->add_option("--split-seed", split_seed, "Seed for --split-fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string command;
  for (const auto& [name, cmd] : cmds) {
    if (cmd->parsed()) command = name;
  }

  std::unique_ptr<Pipeline> pipeline;
  try {
    log::set_level(parse_level(flags.log_level));
    const RunConfig config = resolve(flags);
    pipeline = std::make_unique<Pipeline>(config, parse_force(flags.force));
    Pipeline& p = *pipeline;

    if (command == "ingest") {
      cmd_ingest(p, split_fraction, split_seed);
    } else if (command == "score-import") {
      std::cout << "scores\t" << p.scores().size() << "\ndimension\t" << p.scores().dimension()
                << "\n";
    } else if (command == "cluster") {
      cmd_cluster(p, flags);
    } else if (command == "gen-cot") {
      cmd_gen_cot(p);
    } else if (command == "sample-demos") {
      cmd_sample_demos(p, flags);
    } else if (command == "build-prompts") {
      cmd_build_prompts(p);
    } else if (command == "run") {
      print_report(p.evaluate(config.mode, config.output_dir));
      emit_plots(p, flags);
    } else if (command == "ablate") {
      // run_ablation shares one set of upstream stages and writes its own manifest.
      std::cout << render_comparison(run_ablation(config));
      return EXIT_SUCCESS;
    } else if (command == "report") {
      cmd_report(config);
    }
    p.write_manifest(command);
    return EXIT_SUCCESS;
  } catch (const Error& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    if (pipeline) {
      try {
        pipeline->write_manifest(command, "failed:" + e.stage());
      } catch (const std::exception&) {
      }
    }
    return EXIT_FAILURE;
  } catch (const std::exception& e) {
    std::cerr << "error [" << command << "]: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
}
