// OpenAI-compatible chat-completions client with retry and an on-disk
// response cache.
#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "layoutplan/prompt.hpp"

namespace layoutplan {

struct LlmConfig {
  std::string base_url = "https://api.openai.com";
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  double temperature = 0.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds backoff_base{1000};
  std::optional<std::filesystem::path> cache_dir;
  int max_concurrency = 4;

  /// Applies LLM_BASE_URL and LLM_API_KEY when set.
  void apply_environment();
};

class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what, int status = 0)
      : std::runtime_error(what), status_(status) {}
  /// HTTP status, or 0 when no response was received.
  int status() const { return status_; }

 private:
  int status_;
};

class RateLimited : public std::runtime_error {
 public:
  explicit RateLimited(std::chrono::seconds retry_after)
      : std::runtime_error("rate limited; retry after " + std::to_string(retry_after.count()) + "s"),
        retry_after_(retry_after) {}
  std::chrono::seconds retry_after() const { return retry_after_; }

 private:
  std::chrono::seconds retry_after_;
};

class ExhaustedRetries : public std::runtime_error {
 public:
  ExhaustedRetries(int attempts, const std::string& last_error)
      : std::runtime_error("gave up after " + std::to_string(attempts) + " attempts: " + last_error),
        attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Cache key for a request: hash of (model, temperature, rendered prompt).
std::string prompt_cache_key(const LlmConfig& cfg, std::string_view prompt);

/// `<dir>/<key>.json` holding {prompt_hash, response_text, created_at}.
/// Writes go through a temporary file and a rename, so concurrent readers
/// never observe a partial entry.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> load(const std::string& key) const;
  void store(const std::string& key, const std::string& response_text) const;
  std::filesystem::path entry_path(const std::string& key) const;

 private:
  std::filesystem::path dir_;
};

class LlmClient {
 public:
  explicit LlmClient(LlmConfig cfg);

  /// Sends the rendered bundle as one user message and returns the text of
  /// the first choice. Served from the cache when possible.
  std::string complete(const PromptBundle& bundle);
  std::string complete_text(const std::string& prompt);

  using Outcome = std::variant<std::string, std::exception_ptr>;
  /// Runs up to max_concurrency requests at once; results keep input order.
  std::vector<Outcome> complete_many(const std::vector<PromptBundle>& bundles);

  /// Number of HTTP requests attempted so far.
  std::size_t network_calls() const { return network_calls_.load(); }
  const LlmConfig& config() const { return cfg_; }

 private:
  std::string request_once(const std::string& prompt);

  LlmConfig cfg_;
  std::optional<ResponseCache> cache_;
  std::atomic<std::size_t> network_calls_{0};
};

std::string complete(const LlmConfig& cfg, const PromptBundle& bundle);

/// build_prompt -> complete -> parse_layout_response.
Layout plan_layout(LlmClient& client, std::vector<IclExample> examples, const std::string& caption);

}  // namespace layoutplan
