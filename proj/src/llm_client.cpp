#include "mstage/llm_client.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>

#include "mstage/hash.hpp"
#include "mstage/jsonl.hpp"
#include "mstage/log.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "llm_client";
using Json = nlohmann::json;

// Holds a semaphore slot for the lifetime of one call.
class Slot {
 public:
  explicit Slot(std::counting_semaphore<1024>& sem) : sem_(sem) { sem_.acquire(); }
  ~Slot() { sem_.release(); }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  std::counting_semaphore<1024>& sem_;
};

HttpTransport make_http_transport(const HttpConfig& config, std::string api_key) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config.base_url, m, kUrl)) {
    throw Error(kStage, "malformed base_url " + config.base_url);
  }
  std::string host = m[1].str();
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  const int timeout = config.timeout_seconds;
  return [host, path = prefix + "/chat/completions", key = std::move(api_key),
          timeout](const std::string& body) {
    httplib::Client client(host);
    client.set_connection_timeout(timeout, 0);
    client.set_read_timeout(timeout, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + key}};
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) return HttpResult{0, "", httplib::to_string(res.error())};
    return HttpResult{res->status, res->body, ""};
  };
}

}  // namespace

std::string prompt_hash(std::string_view prompt) { return sha256_hex(prompt); }

TranscriptCache::TranscriptCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  jsonl::read_file(path_, kStage, [&](std::size_t line, const Json& rec) {
    if (!rec.is_object() || !rec.contains("prompt_hash") || !rec.contains("response_text")) {
      throw FormatError(kStage, line, "transcript record needs prompt_hash and response_text");
    }
    ChatResponse resp;
    resp.text = rec.at("response_text").get<std::string>();
    resp.finish_reason = rec.value("finish_reason", std::string());
    const auto backend = rec.value("backend", std::string());
    const auto hash = rec.at("prompt_hash").get<std::string>();
    entries_.try_emplace({backend, hash}, resp);
    by_hash_.try_emplace(hash, resp);
  });
}

std::optional<ChatResponse> TranscriptCache::find(const std::string& backend,
                                                  const std::string& hash) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find({backend, hash});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<ChatResponse> TranscriptCache::find_any(const std::string& hash) const {
  std::lock_guard lock(mutex_);
  auto it = by_hash_.find(hash);
  if (it == by_hash_.end()) return std::nullopt;
  return it->second;
}

void TranscriptCache::record(const std::string& backend, const std::string& hash,
                             const ChatResponse& response) {
  std::lock_guard lock(mutex_);
  if (!entries_.try_emplace({backend, hash}, response).second) return;
  by_hash_.try_emplace(hash, response);
  if (path_.empty()) return;
  Json rec;
  rec["backend"] = backend;
  rec["prompt_hash"] = hash;
  rec["response_text"] = response.text;
  rec["finish_reason"] = response.finish_reason;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << jsonl::dump_line(rec);
  out.flush();
  if (!out) throw Error(kStage, "failed to persist transcript record to " + path_.string());
}

std::size_t TranscriptCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

ReplayBackend::ReplayBackend(const std::filesystem::path& transcript) : transcript_(transcript) {
  if (!std::filesystem::exists(transcript)) {
    throw Error(kStage, "replay transcript not found: " + transcript.string());
  }
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
  const auto hash = prompt_hash(request.prompt);
  auto resp = transcript_.find_any(hash);
  if (!resp) throw ReplayMiss(hash);
  return *resp;
}

OpenAIBackend::OpenAIBackend(HttpConfig config) : config_(std::move(config)) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (!key || !*key) {
    throw AuthError("API key environment variable " + config_.api_key_env + " is not set");
  }
  transport_ = make_http_transport(config_, key);
}

OpenAIBackend::OpenAIBackend(HttpConfig config, HttpTransport transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::string OpenAIBackend::request_body(const std::string& model, const ChatRequest& request) {
  Json body;
  body["model"] = model;
  body["messages"] = Json::array({Json{{"role", "user"}, {"content", request.prompt}}});
  body["temperature"] = request.decoding.temperature;
  body["max_tokens"] = request.decoding.max_tokens;
  body["stream"] = false;
  return body.dump();
}

ChatResponse OpenAIBackend::complete(const ChatRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  HttpResult res = transport_(request_body(config_.model_name, request));
  if (res.status == 0) throw TransientError("transport failure: " + res.error);
  if (res.status == 401 || res.status == 403) {
    throw AuthError("authentication rejected (HTTP " + std::to_string(res.status) + ")");
  }
  if (res.status == 429 || res.status >= 500) {
    throw TransientError("HTTP " + std::to_string(res.status));
  }
  if (res.status != 200) {
    throw Error(kStage, "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200));
  }
  Json doc;
  try {
    doc = Json::parse(res.body);
  } catch (const Json::parse_error&) {
    throw TransientError("unparseable completion body");
  }
  const auto& choices = doc.value("choices", Json::array());
  if (choices.empty() || !choices[0].contains("message")) {
    throw Error(kStage, "completion response has no choices");
  }
  ChatResponse out;
  const auto& content = choices[0]["message"].value("content", Json());
  if (!content.is_string()) throw Error(kStage, "completion message has no text content");
  out.text = content.get<std::string>();
  out.finish_reason = choices[0].value("finish_reason", std::string());
  if (auto u = doc.find("usage"); u != doc.end() && u->is_object()) {
    out.usage = TokenUsage{u->value("prompt_tokens", 0L), u->value("completion_tokens", 0L)};
  }
  out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             start)
                       .count();
  return out;
}

LlmClient::LlmClient(std::unique_ptr<ChatBackend> backend, std::shared_ptr<TranscriptCache> cache,
                     RetryPolicy retry, std::size_t concurrency)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      retry_(std::move(retry)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(concurrency, 1, 1024))) {
  if (!backend_) throw Error(kStage, "no backend configured");
  if (retry_.attempts == 0) retry_.attempts = 1;
  if (!retry_.sleep) {
    retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

ChatResponse LlmClient::complete(const ChatRequest& request) {
  if (request.prompt.empty()) throw Error(kStage, "empty prompt");
  if (request.decoding.temperature < 0.0) throw Error(kStage, "negative temperature");
  const auto hash = prompt_hash(request.prompt);
  if (backend_->live() && cache_) {
    if (auto hit = cache_->find(backend_->id(), hash)) return *hit;
  }

  Slot slot(in_flight_);
  std::string last_error;
  auto delay = retry_.base_delay;
  for (std::size_t attempt = 1; attempt <= retry_.attempts; ++attempt) {
    try {
      ChatResponse resp = backend_->complete(request);
      resp.attempts = attempt;
      if (backend_->live() && cache_) cache_->record(backend_->id(), hash, resp);
      return resp;
    } catch (const TransientError& e) {
      last_error = e.what();
      log::warn("attempt " + std::to_string(attempt) + "/" + std::to_string(retry_.attempts) +
                " for " + request.tag + " failed: " + last_error);
      if (attempt < retry_.attempts) {
        retry_.sleep(delay);
        delay = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(delay.count()) * retry_.multiplier));
      }
    }
  }
  throw RetryExhausted(retry_.attempts, last_error);
}

}  // namespace mstage
