#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "mstage/dataset.hpp"
#include "mstage/error.hpp"

namespace mstage {

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct ChatRequest {
  std::string prompt;
  DecodingParams decoding;
  std::string tag;  ///< item id + mode, for diagnostics only
};

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::string finish_reason;
  double latency_ms = 0.0;
  std::optional<TokenUsage> usage;
  std::size_t attempts = 0;
};

/// Retryable failure: network error, HTTP 429 or 5xx.
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& what) : Error("llm_client", what) {}
};

class AuthError : public Error {
 public:
  explicit AuthError(const std::string& what) : Error("llm_client", what) {}
};

class RetryExhausted : public Error {
 public:
  RetryExhausted(std::size_t attempts, const std::string& last)
      : Error("llm_client",
              "gave up after " + std::to_string(attempts) + " attempts: " + last) {}
};

class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(std::string hash)
      : Error("llm_client", "replay miss: no transcript entry for prompt hash " + hash),
        hash_(std::move(hash)) {}
  const std::string& hash() const { return hash_; }

 private:
  std::string hash_;
};

/// Key used by transcripts and chain caches.
std::string prompt_hash(std::string_view prompt);

/// Persisted (backend id, prompt hash) -> response map. Append-only; writes
/// are serialized and flushed before `record` returns.
class TranscriptCache {
 public:
  /// In-memory only.
  TranscriptCache() = default;
  /// Loads `path` if it exists and appends new records to it.
  explicit TranscriptCache(std::filesystem::path path);

  std::optional<ChatResponse> find(const std::string& backend, const std::string& hash) const;
  /// Lookup ignoring the backend id; first recorded entry wins.
  std::optional<ChatResponse> find_any(const std::string& hash) const;
  void record(const std::string& backend, const std::string& hash, const ChatResponse& response);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, ChatResponse> entries_;
  std::map<std::string, ChatResponse> by_hash_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string id() const = 0;
  /// Live backends hit the network and have their responses persisted.
  virtual bool live() const = 0;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Serves recorded transcripts; never touches the network.
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& transcript);
  std::string id() const override { return "replay"; }
  bool live() const override { return false; }
  ChatResponse complete(const ChatRequest& request) override;

 private:
  TranscriptCache transcript_;
};

struct HttpResult {
  int status = 0;  ///< 0 = transport failure
  std::string body;
  std::string error;
};

/// POSTs a JSON body to the chat-completions endpoint.
using HttpTransport = std::function<HttpResult(const std::string& body)>;

struct HttpConfig {
  std::string base_url = "https://dashscope.aliyuncs.com/compatible-mode/v1";
  std::string model_name = "qwen-plus";
  std::string api_key_env = "MSTAGE_API_KEY";
  int timeout_seconds = 120;
};

/// OpenAI-style chat-completion backend.
class OpenAIBackend : public ChatBackend {
 public:
  /// Reads the API key from the configured environment variable and uses the
  /// built-in HTTP transport.
  explicit OpenAIBackend(HttpConfig config);
  OpenAIBackend(HttpConfig config, HttpTransport transport);

  std::string id() const override { return "openai:" + config_.model_name; }
  bool live() const override { return true; }
  ChatResponse complete(const ChatRequest& request) override;

  static std::string request_body(const std::string& model, const ChatRequest& request);

 private:
  HttpConfig config_;
  HttpTransport transport_;
};

struct RetryPolicy {
  std::size_t attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  /// Injection point for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Front door used by the pipeline: transcript lookup, bounded concurrency,
/// retries with exponential backoff, persistence of live responses.
class LlmClient {
 public:
  LlmClient(std::unique_ptr<ChatBackend> backend, std::shared_ptr<TranscriptCache> cache,
            RetryPolicy retry = {}, std::size_t concurrency = 4);

  ChatResponse complete(const ChatRequest& request);
  std::string backend_id() const { return backend_->id(); }
  DecodingParams default_decoding;

 private:
  std::unique_ptr<ChatBackend> backend_;
  std::shared_ptr<TranscriptCache> cache_;
  RetryPolicy retry_;
  std::counting_semaphore<1024> in_flight_;
};

/// Final-answer extraction. Recognizes "The answer is X" (any case) and
/// "答案是X", skipping spaces, colons, quotes, brackets and '*' before the
/// letter. X may be A-D, a-d or their fullwidth forms; a lowercase letter
/// only counts when followed by punctuation or the end of text, so "the
/// answer is a metaphor" does not match. The last match wins. Without a
/// match, a reply consisting of a single option letter is accepted.
std::optional<OptionLabel> extract_answer(std::string_view text);

}  // namespace mstage
