// Layout evaluation: closed-set label mapping, maximum-IoU and LaySim
// matching scores, and the Frechet distance between feature clouds.
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "layoutplan/layout.hpp"

namespace layoutplan {

class EmbedderFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateCloud : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Canonical class names with one unit-norm embedding row each.
class LabelVocabulary {
 public:
  LabelVocabulary(std::vector<std::string> labels, std::vector<std::vector<double>> embeddings);

  /// JSON Lines `{"label": string, "vec": [f32 x d]}`; rows are normalized on
  /// load when they are off by more than float rounding.
  static LabelVocabulary load_jsonl(const std::filesystem::path& path);

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::vector<double>>& embeddings() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return labels_.size(); }

  /// Index of the row with the largest cosine to `vec`; ties go to the
  /// lowest index.
  std::size_t nearest(const std::vector<double>& vec) const;

 private:
  std::vector<std::string> labels_;
  std::vector<std::vector<double>> rows_;
  std::size_t dim_ = 0;
};

using TextEmbedFn = std::function<std::vector<double>(const std::string&)>;

/// Replaces every free-form label by its nearest vocabulary label.
Layout map_labels(const Layout& layout, const LabelVocabulary& vocab, const TextEmbedFn& embed);

struct MatchPair {
  std::size_t index_a;
  std::size_t index_b;
  double weight;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // sorted by index_a
  double total = 0.0;            // sum of pair weights in index_a order
  double normalized = 0.0;       // total / max(|a|, |b|); 0 if either is empty
};

using EdgeWeightFn = std::function<double(const BoundingBox&, const BoundingBox&)>;

/// Optimal same-label matching under `weight`, solved one label class at a
/// time. Pairs with zero weight are dropped from the result.
MatchResult match_layouts(const Layout& a, const Layout& b, const EdgeWeightFn& weight);

/// min(sqrt(area_a), sqrt(area_b)) * 2^(-center_distance - shape_weight * shape_delta)
struct LaySimWeights {
  double center_weight = 1.0;
  double shape_weight = 2.0;
};

double lay_sim_edge(const BoundingBox& a, const BoundingBox& b, const LaySimWeights& cfg = {});

MatchResult max_iou_match(const Layout& a, const Layout& b);
MatchResult lay_sim_match(const Layout& a, const Layout& b, const LaySimWeights& cfg = {});

/// Scores in [0, 1]. Labels must already be mapped to a shared vocabulary.
double max_iou(const Layout& a, const Layout& b);
double lay_sim(const Layout& a, const Layout& b, const LaySimWeights& cfg = {});

/// n x d feature matrix, one row per sample.
struct FeatureCloud {
  std::vector<std::vector<double>> vectors;

  std::size_t size() const { return vectors.size(); }
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }

  /// JSON Lines; each line is either an array of numbers or an object with
  /// a "vec" array.
  static FeatureCloud load_jsonl(const std::filesystem::path& path);
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)) with unbiased
/// covariances. The trace of the square root is taken from the eigenvalues
/// of S_a^(1/2) S_b S_a^(1/2); eigenvalues below 1e-10 count as zero.
double frechet_distance(const FeatureCloud& a, const FeatureCloud& b);

}  // namespace layoutplan
