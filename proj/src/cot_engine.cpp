#include "mstage/cot_engine.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <limits>
#include <thread>

#include "mstage/error.hpp"
#include "mstage/jsonl.hpp"
#include "mstage/log.hpp"
#include "mstage/utf8.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "cot_engine";
using Json = nlohmann::json;

}  // namespace

std::string_view to_string(SelectionStrategy strategy) {
  switch (strategy) {
    case SelectionStrategy::shortest_question: return "shortest_question";
    case SelectionStrategy::shortest_chain: return "shortest_chain";
    case SelectionStrategy::cluster_center: return "cluster_center";
    case SelectionStrategy::shortest_both: return "shortest_both";
  }
  return "shortest_question";
}

std::optional<SelectionStrategy> parse_selection_strategy(std::string_view text) {
  std::string s(text);
  std::replace(s.begin(), s.end(), '-', '_');
  for (auto st : {SelectionStrategy::shortest_question, SelectionStrategy::shortest_chain,
                  SelectionStrategy::cluster_center, SelectionStrategy::shortest_both}) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

std::optional<LengthMeasure> parse_length_measure(std::string_view text) {
  if (text == "scalar_count" || text == "scalar-count" || text == "chars") {
    return LengthMeasure::scalar_count;
  }
  if (text == "token_count" || text == "token-count" || text == "tokens") {
    return LengthMeasure::token_count;
  }
  return std::nullopt;
}

TokenSidecar::TokenSidecar(const std::filesystem::path& path) {
  jsonl::read_file(path, kStage, [&](std::size_t line, const Json& rec) {
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
        !rec.contains("tokens") || !rec["tokens"].is_number_unsigned()) {
      throw FormatError(kStage, line, "sidecar record needs string 'id' and unsigned 'tokens'");
    }
    counts_[rec["id"].get<std::string>()] = rec["tokens"].get<std::size_t>();
  });
}

std::optional<std::size_t> TokenSidecar::find(const std::string& id) const {
  auto it = counts_.find(id);
  if (it == counts_.end()) return std::nullopt;
  return it->second;
}

std::size_t question_length(const MCQItem& item, LengthMeasure measure,
                            const TokenSidecar* sidecar) {
  if (measure == LengthMeasure::scalar_count) return utf8::scalar_count(item.question);
  if (!sidecar) throw ValidationError(kStage, "token_count length requires a tokenizer sidecar");
  auto n = sidecar->find(item.id);
  if (!n) throw ValidationError(kStage, "tokenizer sidecar has no entry for '" + item.id + "'");
  return *n;
}

Json to_json(const ReasoningChain& chain) {
  Json j;
  j["item_id"] = chain.item_id;
  j["prompt_hash"] = chain.prompt_hash;
  j["backend"] = chain.backend;
  j["chain_text"] = chain.chain_text;
  j["extracted"] = chain.extracted ? Json(std::string(1, to_char(*chain.extracted))) : Json();
  j["valid"] = chain.valid;
  if (chain.failed) j["failed"] = true;
  return j;
}

ReasoningChain chain_from_json(const Json& rec) {
  ReasoningChain c;
  c.item_id = rec.at("item_id").get<std::string>();
  c.prompt_hash = rec.value("prompt_hash", std::string());
  c.backend = rec.value("backend", std::string());
  c.chain_text = rec.value("chain_text", std::string());
  if (auto e = rec.find("extracted"); e != rec.end() && e->is_string()) {
    c.extracted = parse_label(e->get<std::string>());
  }
  c.valid = rec.value("valid", false);
  c.failed = rec.value("failed", false);
  return c;
}

ChainCache::ChainCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  jsonl::read_file(path_, kStage, [&](std::size_t line, const Json& rec) {
    try {
      auto c = chain_from_json(rec);
      entries_.try_emplace(Key{c.item_id, c.prompt_hash, c.backend}, c);
    } catch (const Json::exception& e) {
      throw FormatError(kStage, line, std::string("bad chain cache record: ") + e.what());
    }
  });
}

std::optional<ReasoningChain> ChainCache::find(const std::string& item_id, const std::string& hash,
                                               const std::string& backend) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(Key{item_id, hash, backend});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ChainCache::record(const ReasoningChain& chain) {
  std::lock_guard lock(mutex_);
  if (!entries_.try_emplace(Key{chain.item_id, chain.prompt_hash, chain.backend}, chain).second) {
    return;
  }
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << jsonl::dump_line(to_json(chain));
  if (!out) throw Error(kStage, "failed to append to chain cache " + path_.string());
}

std::size_t ChainCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string zero_shot_prompt(const MCQItem& item, const PromptStyle& style) {
  return build_prompt(item, {}, std::nullopt, PromptMode::plain_zero_shot, style).text;
}

std::vector<ReasoningChain> generate_chains(const Corpus& corpus, LlmClient& client,
                                            ChainCache* cache, const ChainOptions& options) {
  const auto& items = corpus.items();
  std::vector<ReasoningChain> out(items.size());
  const std::string backend = client.backend_id();

  auto work = [&](std::size_t i) {
    const auto& item = items[i];
    const std::string prompt = zero_shot_prompt(item, options.style);
    const std::string hash = prompt_hash(prompt);
    if (cache) {
      if (auto hit = cache->find(item.id, hash, backend)) {
        out[i] = *hit;
        return;
      }
    }
    ReasoningChain chain;
    chain.item_id = item.id;
    chain.prompt_hash = hash;
    chain.backend = backend;
    try {
      ChatResponse resp = client.complete({prompt, options.decoding, item.id + "/cot"});
      chain.chain_text = resp.text;
      chain.extracted = extract_answer(resp.text);
      chain.valid = chain.extracted && item.gold && *chain.extracted == *item.gold;
      if (cache) cache->record(chain);
    } catch (const AuthError&) {
      throw;
    } catch (const Error& e) {
      chain.failed = true;
      chain.chain_text = e.what();
      log::warn("chain generation failed for " + item.id + ": " + e.what());
    }
    out[i] = std::move(chain);
  };

  const std::size_t workers = std::min(std::max<std::size_t>(1, options.concurrency), items.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) work(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < items.size(); i = next++) work(i);
    });
  }
  pool.clear();
  return out;
}

std::vector<Demonstration> sample_demonstrations(const ClusterModel& model,
                                                 const std::vector<ReasoningChain>& chains,
                                                 const Corpus& corpus,
                                                 const SampleOptions& options,
                                                 std::vector<std::string>* warnings) {
  std::map<std::string, const ReasoningChain*> by_id;
  for (const auto& c : chains) by_id[c.item_id] = &c;

  auto valid_chain = [&](const std::string& id) -> const ReasoningChain* {
    auto it = by_id.find(id);
    if (it == by_id.end() || !it->second->valid) return nullptr;
    const MCQItem* item = corpus.find(id);
    if (!item || !item->gold || it->second->extracted != item->gold) return nullptr;
    return it->second;
  };

  std::vector<Demonstration> demos;
  for (std::size_t c = 0; c < model.k; ++c) {
    std::vector<std::string> pool;
    for (std::size_t row : model.members(c)) {
      if (valid_chain(model.ids[row])) pool.push_back(model.ids[row]);
    }
    if (pool.empty()) {
      const auto msg = "cluster " + std::to_string(c) + " has no valid chain; skipped";
      log::warn(msg);
      if (warnings) warnings->push_back(msg);
      continue;
    }

    std::string winner;
    if (options.strategy == SelectionStrategy::cluster_center) {
      winner = nearest_to_centroid(model, c, [&](const std::string& id) {
        return valid_chain(id) != nullptr;
      });
    } else {
      std::size_t best_len = std::numeric_limits<std::size_t>::max();
      for (const auto& id : pool) {
        const MCQItem& item = corpus.at(id);
        const std::size_t chain_len = utf8::scalar_count(valid_chain(id)->chain_text);
        std::size_t len = 0;
        switch (options.strategy) {
          case SelectionStrategy::shortest_question:
            len = question_length(item, options.measure, options.sidecar);
            break;
          case SelectionStrategy::shortest_chain:
            len = chain_len;
            break;
          case SelectionStrategy::shortest_both:
            len = question_length(item, options.measure, options.sidecar) + chain_len;
            break;
          case SelectionStrategy::cluster_center:
            break;
        }
        if (winner.empty() || len < best_len || (len == best_len && id < winner)) {
          winner = id;
          best_len = len;
        }
      }
    }

    const MCQItem& item = corpus.at(winner);
    demos.push_back(Demonstration{item.id, item.question, item.options,
                                  valid_chain(winner)->chain_text, *item.gold});
  }
  if (demos.empty()) throw ValidationError(kStage, "no demonstrations available: every cluster lacks a valid chain");
  return demos;
}

Json to_json(const Demonstration& demo) {
  Json j;
  j["item_id"] = demo.item_id;
  j["question"] = demo.question;
  j["options"] = demo.options;
  j["chain_text"] = demo.chain_text;
  j["answer"] = std::string(1, to_char(demo.answer));
  return j;
}

Demonstration demonstration_from_json(const Json& rec) {
  Demonstration d;
  d.item_id = rec.at("item_id").get<std::string>();
  d.question = rec.at("question").get<std::string>();
  d.options = rec.at("options").get<std::array<std::string, 4>>();
  d.chain_text = rec.at("chain_text").get<std::string>();
  auto label = parse_label(rec.at("answer").get<std::string>());
  if (!label) throw Error(kStage, "bad demonstration answer");
  d.answer = *label;
  return d;
}

}  // namespace mstage
