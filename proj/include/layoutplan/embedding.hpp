// Text embedders used for candidate ranking and label mapping, and the
// HTTP client for the scoring sidecar.
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace layoutplan {

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  /// Unit-norm vectors of a fixed dimension, one per input text.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  virtual std::size_t dim() const = 0;

  std::vector<double> embed_one(const std::string& text) { return embed({text}).front(); }
};

/// Offline embedder: lowercase word tokens and character trigrams hashed
/// into `dim` signed buckets, then normalized. Deterministic across runs and
/// platforms.
class HashingEmbedder final : public TextEmbedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 64) : dim_(dim) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }

 private:
  std::size_t dim_;
};

/// Lookup table loaded from JSON Lines `{"label"|"text": string, "vec": [...]}`.
/// Unknown texts fall back to `fallback` when provided, otherwise throw.
class TableEmbedder final : public TextEmbedder {
 public:
  explicit TableEmbedder(const std::filesystem::path& path,
                         std::shared_ptr<TextEmbedder> fallback = nullptr);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }

 private:
  std::map<std::string, std::vector<double>> table_;
  std::size_t dim_ = 0;
  std::shared_ptr<TextEmbedder> fallback_;
};

class ScorerError : public std::runtime_error {
 public:
  ScorerError(const std::string& what, int status) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ScorerHealth {
  std::string status;
  std::vector<std::string> models;
  std::map<std::string, std::size_t> dims;
};

/// A pair entry references either an image path or a text by index, e.g.
/// {"image", 0} or {"text", 2}.
struct ScoreRef {
  std::string kind;
  std::size_t index = 0;
};

struct ScoreRequest {
  std::vector<std::string> texts;
  std::vector<std::string> image_paths;
  std::vector<std::pair<ScoreRef, ScoreRef>> pairs;
};

struct ScoreResponse {
  std::vector<double> sims;
  std::vector<double> aes;
};

/// Client for the scoring sidecar (`/v1/embed`, `/v1/score`, `/v1/health`).
class ScorerClient final : public TextEmbedder {
 public:
  explicit ScorerClient(std::string base_url,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

  /// SCORER_BASE_URL, or nullopt when unset.
  static std::optional<ScorerClient> from_environment();

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override;
  ScoreResponse score(const ScoreRequest& request);
  ScorerHealth health();

 private:
  std::string post(const std::string& path, const std::string& body);

  std::string base_url_;
  std::chrono::milliseconds timeout_;
  mutable std::optional<std::size_t> dim_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace layoutplan
