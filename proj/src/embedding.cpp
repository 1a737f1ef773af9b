#include "layoutplan/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>

#include "httplib.h"
#include "json.hpp"

namespace layoutplan {

using nlohmann::json;

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& x : v) x /= n;
}

}  // namespace

std::vector<std::vector<double>> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dim_, 0.0);
    auto add = [&](std::string_view feature, double weight) {
      const std::uint64_t h = fnv1a(feature);
      const double sign = (h >> 63) ? -1.0 : 1.0;
      v[(h >> 1) % dim_] += sign * weight;
    };
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      add("w:" + word, 1.0);
      const std::string padded = "#" + word + "#";
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add("t:" + padded.substr(i, 3), 0.5);
      word.clear();
    };
    for (unsigned char c : text) {
      if (std::isalnum(c)) {
        word.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
    normalize(v);
    out.push_back(std::move(v));
  }
  return out;
}

TableEmbedder::TableEmbedder(const std::filesystem::path& path, std::shared_ptr<TextEmbedder> fallback)
    : fallback_(std::move(fallback)) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding table " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto doc = json::parse(line);
    const std::string key = doc.contains("label") ? doc["label"].get<std::string>()
                                                  : doc.at("text").get<std::string>();
    auto vec = doc.at("vec").get<std::vector<double>>();
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_) throw std::runtime_error("embedding table rows differ in dimension");
    normalize(vec);
    table_[key] = std::move(vec);
  }
  if (dim_ == 0) throw std::runtime_error("embedding table " + path.string() + " is empty");
  if (fallback_ && fallback_->dim() != dim_) {
    throw std::runtime_error("fallback embedder dimension does not match the table");
  }
}

std::vector<std::vector<double>> TableEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto it = table_.find(t);
    if (it != table_.end()) {
      out.push_back(it->second);
    } else if (fallback_) {
      out.push_back(fallback_->embed_one(t));
    } else {
      throw std::out_of_range("no embedding for '" + t + "'");
    }
  }
  return out;
}

ScorerClient::ScorerClient(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::optional<ScorerClient> ScorerClient::from_environment() {
  const char* url = std::getenv("SCORER_BASE_URL");
  if (!url || !*url) return std::nullopt;
  return ScorerClient(url);
}

std::string ScorerClient::post(const std::string& path, const std::string& body) {
  httplib::Client http(base_url_);
  const auto s = static_cast<time_t>(timeout_.count() / 1000);
  const auto us = static_cast<time_t>((timeout_.count() % 1000) * 1000);
  http.set_connection_timeout(s, us);
  http.set_read_timeout(s, us);
  auto res = body.empty() ? http.Get(path) : http.Post(path, body, "application/json");
  if (!res) throw ScorerError("scorer unreachable: " + httplib::to_string(res.error()), 0);
  if (res->status != 200) {
    throw ScorerError("scorer " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body,
                      res->status);
  }
  return res->body;
}

std::vector<std::vector<double>> ScorerClient::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  const json req{{"texts", texts}};
  const json doc = json::parse(post("/v1/embed", req.dump()));
  auto vecs = doc.at("embeddings").get<std::vector<std::vector<double>>>();
  const auto d = doc.at("dim").get<std::size_t>();
  if (vecs.size() != texts.size()) throw ScorerError("scorer returned the wrong number of embeddings", 200);
  for (const auto& v : vecs) {
    if (v.size() != d) throw ScorerError("scorer embedding dimension is inconsistent", 200);
  }
  if (dim_ && *dim_ != d) throw ScorerError("scorer embedding dimension changed", 200);
  dim_ = d;
  return vecs;
}

std::size_t ScorerClient::dim() const {
  if (!dim_) {
    // Probing needs a request; the cached dimension is the only state touched.
    const_cast<ScorerClient*>(this)->embed({"dimension probe"});
  }
  return *dim_;
}

ScoreResponse ScorerClient::score(const ScoreRequest& request) {
  json pairs = json::array();
  for (const auto& [a, b] : request.pairs) {
    pairs.push_back(json::array({json{{a.kind, a.index}}, json{{b.kind, b.index}}}));
  }
  const json req{{"texts", request.texts}, {"image_paths", request.image_paths}, {"pairs", pairs}};
  const json doc = json::parse(post("/v1/score", req.dump()));
  ScoreResponse out;
  out.sims = doc.at("sims").get<std::vector<double>>();
  out.aes = doc.value("aes", std::vector<double>{});
  return out;
}

ScorerHealth ScorerClient::health() {
  const json doc = json::parse(post("/v1/health", ""));
  ScorerHealth h;
  h.status = doc.value("status", "");
  h.models = doc.value("models", std::vector<std::string>{});
  if (doc.contains("dims") && doc["dims"].is_object()) {
    for (const auto& [k, v] : doc["dims"].items()) h.dims[k] = v.get<std::size_t>();
  }
  return h;
}

}  // namespace layoutplan
