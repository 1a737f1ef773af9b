#include "layoutplan/llm_client.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace layoutplan {

namespace fs = std::filesystem;
using nlohmann::json;

void LlmConfig::apply_environment() {
  if (const char* url = std::getenv("LLM_BASE_URL"); url && *url) base_url = url;
  if (const char* key = std::getenv("LLM_API_KEY"); key && *key) api_key = key;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string prompt_cache_key(const LlmConfig& cfg, std::string_view prompt) {
  const json key = json::array({cfg.model, cfg.temperature, std::string(prompt)});
  return sha256_hex(key.dump());
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ResponseCache::entry_path(const std::string& key) const { return dir_ / (key + ".json"); }

std::optional<std::string> ResponseCache::load(const std::string& key) const {
  std::ifstream in(entry_path(key), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    json doc = json::parse(in);
    if (doc.value("prompt_hash", "") != key) return std::nullopt;
    return doc.at("response_text").get<std::string>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void ResponseCache::store(const std::string& key, const std::string& response_text) const {
  char stamp[32];
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  json doc;
  doc["prompt_hash"] = key;
  doc["response_text"] = response_text;
  doc["created_at"] = stamp;

  std::ostringstream tmp_name;
  tmp_name << key << ".tmp." << std::this_thread::get_id() << '.'
           << std::chrono::steady_clock::now().time_since_epoch().count();
  const fs::path tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache entry " + tmp.string());
    out << doc.dump();
  }
  fs::rename(tmp, entry_path(key));
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // request path for chat completions
};

Endpoint chat_endpoint(const std::string& base_url) {
  std::string url = base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  Endpoint ep;
  ep.origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) {
    ep.path = prefix + "/chat/completions";
  } else {
    ep.path = prefix + "/v1/chat/completions";
  }
  return ep;
}

enum class FailureKind { kTransport, kServer, kRateLimited };

struct AttemptFailure {
  FailureKind kind;
  std::string message;
  std::chrono::seconds retry_after{0};
};

}  // namespace

LlmClient::LlmClient(LlmConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (cfg_.max_concurrency < 1) cfg_.max_concurrency = 1;
  if (cfg_.cache_dir) cache_.emplace(*cfg_.cache_dir);
}

std::string LlmClient::complete(const PromptBundle& bundle) { return complete_text(bundle.render()); }

std::string LlmClient::complete_text(const std::string& prompt) {
  std::string key;
  if (cache_) {
    key = prompt_cache_key(cfg_, prompt);
    if (auto hit = cache_->load(key)) return *hit;
  }
  std::string text = request_once(prompt);
  if (cache_) cache_->store(key, text);
  return text;
}

std::string LlmClient::request_once(const std::string& prompt) {
  const Endpoint ep = chat_endpoint(cfg_.base_url);
  json body;
  body["model"] = cfg_.model;
  body["temperature"] = cfg_.temperature;
  body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
  const std::string payload = body.dump();

  std::mt19937_64 jitter_rng(std::random_device{}());
  std::uniform_real_distribution<double> jitter(0.5, 1.5);

  AttemptFailure last{FailureKind::kTransport, "no attempt made"};
  const int attempts = cfg_.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      auto delay = std::chrono::duration<double, std::milli>(
          static_cast<double>(cfg_.backoff_base.count()) * std::pow(2.0, attempt - 1) *
          jitter(jitter_rng));
      if (last.kind == FailureKind::kRateLimited) {
        delay = std::max(delay, std::chrono::duration<double, std::milli>(last.retry_after));
      }
      std::this_thread::sleep_for(delay);
    }

    httplib::Client http(ep.origin);
    const auto secs = [](std::chrono::milliseconds ms) {
      return std::make_pair(static_cast<time_t>(ms.count() / 1000),
                            static_cast<time_t>((ms.count() % 1000) * 1000));
    };
    auto [ts, tus] = secs(cfg_.timeout);
    http.set_connection_timeout(ts, tus);
    http.set_read_timeout(ts, tus);
    http.set_write_timeout(ts, tus);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    ++network_calls_;
    auto res = http.Post(ep.path, headers, payload, "application/json");
    if (!res) {
      last = {FailureKind::kTransport, "transport error: " + httplib::to_string(res.error())};
      continue;
    }
    if (res->status == 429) {
      std::chrono::seconds retry_after{0};
      if (res->has_header("Retry-After")) {
        try {
          retry_after = std::chrono::seconds(std::stoll(res->get_header_value("Retry-After")));
        } catch (const std::exception&) {
        }
      }
      last = {FailureKind::kRateLimited, "HTTP 429", retry_after};
      continue;
    }
    if (res->status >= 500) {
      last = {FailureKind::kServer, "HTTP " + std::to_string(res->status)};
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body, res->status);
    }
    try {
      const json doc = json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw TransportError(std::string("unexpected response body: ") + e.what(), res->status);
    }
  }
  if (last.kind == FailureKind::kRateLimited) throw RateLimited(last.retry_after);
  throw ExhaustedRetries(attempts, last.message);
}

std::vector<LlmClient::Outcome> LlmClient::complete_many(const std::vector<PromptBundle>& bundles) {
  std::vector<Outcome> results(bundles.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < bundles.size(); i = next++) {
      try {
        results[i] = complete(bundles[i]);
      } catch (...) {
        results[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(cfg_.max_concurrency), bundles.size());
  std::vector<std::jthread> threads;
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  threads.clear();
  return results;
}

std::string complete(const LlmConfig& cfg, const PromptBundle& bundle) {
  LlmClient client(cfg);
  return client.complete(bundle);
}

Layout plan_layout(LlmClient& client, std::vector<IclExample> examples, const std::string& caption) {
  const PromptBundle bundle = build_prompt(std::move(examples), caption);
  return parse_layout_response(client.complete(bundle));
}

}  // namespace layoutplan
