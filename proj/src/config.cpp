#include "mstage/config.hpp"

#include <set>

#include "mstage/error.hpp"
#include "mstage/jsonl.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "config";
using Json = nlohmann::json;

std::string format_name(CorpusFormat f) {
  return f == CorpusFormat::task_native ? "task-native" : "jsonl";
}

template <typename T, typename Parse>
T parse_enum(const Json& v, const char* key, Parse parse) {
  if (!v.is_string()) throw ValidationError(kStage, std::string(key) + " must be a string");
  auto parsed = parse(v.get<std::string>());
  if (!parsed) {
    throw ValidationError(kStage, std::string("invalid value for ") + key + ": " +
                                      v.get<std::string>());
  }
  return *parsed;
}

}  // namespace

std::string_view to_string(Predictor predictor) {
  switch (predictor) {
    case Predictor::llm: return "llm";
    case Predictor::scorer_argmax: return "scorer_argmax";
    case Predictor::rule_baseline: return "rule_baseline";
  }
  return "llm";
}

std::optional<Predictor> parse_predictor(std::string_view text) {
  if (text == "llm") return Predictor::llm;
  if (text == "scorer_argmax" || text == "scorer-argmax" || text == "scorer") {
    return Predictor::scorer_argmax;
  }
  if (text == "rule_baseline" || text == "rule-baseline" || text == "rules") {
    return Predictor::rule_baseline;
  }
  return std::nullopt;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["corpus"] = c.corpus.generic_string();
  j["corpus_format"] = format_name(c.corpus_format);
  j["subtask"] = std::string(to_string(c.subtask));
  j["split"] = std::string(to_string(c.split));
  j["scores"] = c.scores.generic_string();
  j["uniform_fallback"] = c.uniform_fallback;
  j["fallback_dimension"] = c.fallback_dimension;
  j["demo_corpus"] = c.demo_corpus.generic_string();
  j["cache_dir"] = c.cache_dir.generic_string();
  j["output_dir"] = c.output_dir.generic_string();
  j["mode"] = std::string(to_string(c.mode));
  j["strategy"] = std::string(to_string(c.strategy));
  j["length_measure"] =
      c.length_measure == LengthMeasure::scalar_count ? "scalar_count" : "token_count";
  j["token_sidecar"] = c.token_sidecar.generic_string();
  j["candidate_style"] = c.candidate_style == CandidateStyle::scores ? "scores" : "ranked";
  j["trigger"] = c.trigger;
  j["reference_sources"] = c.reference_sources;
  j["track"] = c.track;
  j["predictor"] = std::string(to_string(c.predictor));
  j["dump_prompts"] = c.dump_prompts;
  j["k"] = c.k ? Json(*c.k) : Json("auto");
  j["k_max"] = c.k_max;
  j["seed"] = c.seed;
  j["restarts"] = c.restarts;
  j["normalize"] = c.normalize_cosine ? "cosine" : "none";
  j["backend"] = c.backend;
  j["transcript"] = c.transcript.generic_string();
  j["base_url"] = c.http.base_url;
  j["model_name"] = c.http.model_name;
  j["api_key_env"] = c.http.api_key_env;
  j["timeout_seconds"] = c.http.timeout_seconds;
  j["temperature"] = c.temperature;
  j["max_tokens"] = c.max_tokens;
  j["concurrency"] = c.concurrency;
  j["retries"] = c.retries;
  j["resume"] = c.resume;
  return j;
}

RunConfig config_from_json(const Json& doc_in) {
  const Json& doc = doc_in.contains("config") ? doc_in.at("config") : doc_in;
  if (!doc.is_object()) throw ValidationError(kStage, "config must be a JSON object");
  RunConfig c;
  static const std::set<std::string> kKnown = {
      "corpus", "corpus_format", "subtask", "split", "scores", "uniform_fallback",
      "fallback_dimension", "demo_corpus", "cache_dir", "output_dir", "mode", "strategy",
      "length_measure", "token_sidecar", "candidate_style", "trigger", "reference_sources",
      "track", "predictor", "dump_prompts", "k", "k_max", "seed", "restarts", "normalize",
      "backend", "transcript", "base_url", "model_name", "api_key_env", "timeout_seconds",
      "temperature", "max_tokens", "concurrency", "retries", "resume"};
  for (const auto& [key, _] : doc.items()) {
    if (!kKnown.count(key)) throw ValidationError(kStage, "unknown config key '" + key + "'");
  }
  try {
    auto path = [&](const char* key, std::filesystem::path& out) {
      if (doc.contains(key)) out = doc.at(key).get<std::string>();
    };
    path("corpus", c.corpus);
    path("scores", c.scores);
    path("demo_corpus", c.demo_corpus);
    path("cache_dir", c.cache_dir);
    path("output_dir", c.output_dir);
    path("token_sidecar", c.token_sidecar);
    path("transcript", c.transcript);
    if (doc.contains("corpus_format")) {
      c.corpus_format = parse_enum<CorpusFormat>(doc["corpus_format"], "corpus_format",
                                                 parse_corpus_format);
    }
    if (doc.contains("subtask")) {
      c.subtask = parse_enum<Subtask>(doc["subtask"], "subtask", parse_subtask);
    }
    if (doc.contains("split")) c.split = parse_enum<Split>(doc["split"], "split", parse_split);
    if (doc.contains("mode")) c.mode = parse_enum<PromptMode>(doc["mode"], "mode", parse_prompt_mode);
    if (doc.contains("strategy")) {
      c.strategy = parse_enum<SelectionStrategy>(doc["strategy"], "strategy",
                                                 parse_selection_strategy);
    }
    if (doc.contains("length_measure")) {
      c.length_measure = parse_enum<LengthMeasure>(doc["length_measure"], "length_measure",
                                                   parse_length_measure);
    }
    if (doc.contains("candidate_style")) {
      c.candidate_style = parse_enum<CandidateStyle>(doc["candidate_style"], "candidate_style",
                                                     parse_candidate_style);
    }
    if (doc.contains("predictor")) {
      c.predictor = parse_enum<Predictor>(doc["predictor"], "predictor", parse_predictor);
    }
    c.uniform_fallback = doc.value("uniform_fallback", c.uniform_fallback);
    c.fallback_dimension = doc.value("fallback_dimension", c.fallback_dimension);
    c.trigger = doc.value("trigger", c.trigger);
    c.reference_sources = doc.value("reference_sources", c.reference_sources);
    c.track = doc.value("track", c.track);
    c.dump_prompts = doc.value("dump_prompts", c.dump_prompts);
    if (doc.contains("k")) {
      const auto& k = doc["k"];
      if (k.is_string() && k.get<std::string>() == "auto") {
        c.k.reset();
      } else {
        c.k = k.get<std::size_t>();
      }
    }
    c.k_max = doc.value("k_max", c.k_max);
    c.seed = doc.value("seed", c.seed);
    c.restarts = doc.value("restarts", c.restarts);
    if (doc.contains("normalize")) {
      const auto n = doc["normalize"].get<std::string>();
      if (n != "cosine" && n != "none") throw ValidationError(kStage, "normalize must be cosine|none");
      c.normalize_cosine = n == "cosine";
    }
    c.backend = doc.value("backend", c.backend);
    c.http.base_url = doc.value("base_url", c.http.base_url);
    c.http.model_name = doc.value("model_name", c.http.model_name);
    c.http.api_key_env = doc.value("api_key_env", c.http.api_key_env);
    c.http.timeout_seconds = doc.value("timeout_seconds", c.http.timeout_seconds);
    c.temperature = doc.value("temperature", c.temperature);
    c.max_tokens = doc.value("max_tokens", c.max_tokens);
    c.concurrency = doc.value("concurrency", c.concurrency);
    c.retries = doc.value("retries", c.retries);
    c.resume = doc.value("resume", c.resume);
  } catch (const Json::exception& e) {
    throw ValidationError(kStage, std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  Json doc;
  try {
    doc = Json::parse(jsonl::read_text(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(kStage, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void validate(const RunConfig& c) {
  if (c.corpus.empty()) throw ValidationError(kStage, "no corpus path given");
  if (c.k && *c.k < 1) throw ValidationError(kStage, "k must be >= 1");
  if (!c.k && c.k_max < 3) throw ValidationError(kStage, "k_max must be >= 3 for auto k");
  if (c.restarts < 1) throw ValidationError(kStage, "restarts must be >= 1");
  if (c.track != 1 && c.track != 2) throw ValidationError(kStage, "track must be 1 or 2");
  if (c.backend != "replay" && c.backend != "openai") {
    throw ValidationError(kStage, "backend must be replay or openai");
  }
  if (c.temperature < 0.0) throw ValidationError(kStage, "temperature must be >= 0");
  if (c.max_tokens < 1) throw ValidationError(kStage, "max_tokens must be >= 1");
  if (c.concurrency < 1) throw ValidationError(kStage, "concurrency must be >= 1");
  if (c.length_measure == LengthMeasure::token_count && c.token_sidecar.empty()) {
    throw ValidationError(kStage, "token_count length measure requires --token-sidecar");
  }
  for (const auto& s : c.reference_sources) {
    if (s != "scorer" && s != "rules" && s != "llm") {
      throw ValidationError(kStage, "unknown reference source '" + s + "'");
    }
  }
}

PromptStyle prompt_style(const RunConfig& c) {
  PromptStyle style;
  style.trigger = c.trigger;
  style.answer_instruction = c.track == 1;
  style.candidate_style = c.candidate_style;
  return style;
}

}  // namespace mstage
