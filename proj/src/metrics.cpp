#include "layoutplan/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "layoutplan/assignment.hpp"

namespace layoutplan {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

LabelVocabulary::LabelVocabulary(std::vector<std::string> labels,
                                 std::vector<std::vector<double>> embeddings)
    : labels_(std::move(labels)), rows_(std::move(embeddings)) {
  if (labels_.empty()) throw std::invalid_argument("vocabulary is empty");
  if (labels_.size() != rows_.size()) {
    throw std::invalid_argument("vocabulary: label and embedding counts differ");
  }
  dim_ = rows_.front().size();
  if (dim_ == 0) throw std::invalid_argument("vocabulary: zero-dimensional embeddings");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() != dim_) throw std::invalid_argument("vocabulary: ragged embeddings");
    const double norm = std::sqrt(dot(rows_[i], rows_[i]));
    if (std::abs(norm - 1.0) > 1e-6) {
      throw std::invalid_argument("vocabulary: row for '" + labels_[i] + "' is not unit-norm");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (labels_[j] == labels_[i]) throw std::invalid_argument("vocabulary: duplicate label " + labels_[i]);
    }
  }
}

LabelVocabulary LabelVocabulary::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto doc = nlohmann::json::parse(line);
    labels.push_back(doc.at("label").get<std::string>());
    auto vec = doc.at("vec").get<std::vector<double>>();
    // f32 storage loses ~1e-7 of norm; renormalize in double.
    const double norm = std::sqrt(dot(vec, vec));
    if (norm > 0.0 && std::abs(norm - 1.0) < 1e-4) {
      for (double& v : vec) v /= norm;
    }
    rows.push_back(std::move(vec));
  }
  return LabelVocabulary(std::move(labels), std::move(rows));
}

std::size_t LabelVocabulary::nearest(const std::vector<double>& vec) const {
  if (vec.size() != dim_) throw EmbedderFailure("embedding dimension does not match vocabulary");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const double s = dot(rows_[i], vec);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

Layout map_labels(const Layout& layout, const LabelVocabulary& vocab, const TextEmbedFn& embed) {
  Layout out = layout;
  std::map<std::string, std::string> memo;
  for (auto& item : out.items) {
    auto it = memo.find(item.label);
    if (it == memo.end()) {
      std::vector<double> vec;
      try {
        vec = embed(item.label);
      } catch (const std::exception& e) {
        throw EmbedderFailure(std::string("embedding '") + item.label + "' failed: " + e.what());
      }
      const double norm = std::sqrt(dot(vec, vec));
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw EmbedderFailure("embedder returned a degenerate vector for '" + item.label + "'");
      }
      for (double& v : vec) v /= norm;
      it = memo.emplace(item.label, vocab.labels()[vocab.nearest(vec)]).first;
    }
    item.label = it->second;
  }
  return out;
}

MatchResult match_layouts(const Layout& a, const Layout& b, const EdgeWeightFn& weight) {
  MatchResult result;
  if (a.empty() || b.empty()) return result;

  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> classes;
  for (std::size_t i = 0; i < a.size(); ++i) classes[a.items[i].label].first.push_back(i);
  for (std::size_t j = 0; j < b.size(); ++j) classes[b.items[j].label].second.push_back(j);

  for (const auto& [label, members] : classes) {
    const auto& [ia, ib] = members;
    if (ia.empty() || ib.empty()) continue;
    std::vector<std::vector<double>> w(ia.size(), std::vector<double>(ib.size()));
    for (std::size_t r = 0; r < ia.size(); ++r)
      for (std::size_t c = 0; c < ib.size(); ++c) w[r][c] = weight(a.items[ia[r]].box, b.items[ib[c]].box);
    const auto match = max_weight_assignment(w);
    for (std::size_t r = 0; r < ia.size(); ++r) {
      if (match[r] < 0) continue;
      const double wt = w[r][static_cast<std::size_t>(match[r])];
      if (wt > 0.0) result.pairs.push_back({ia[r], ib[static_cast<std::size_t>(match[r])], wt});
    }
  }
  std::sort(result.pairs.begin(), result.pairs.end(),
            [](const MatchPair& x, const MatchPair& y) { return x.index_a < y.index_a; });
  for (const auto& p : result.pairs) result.total += p.weight;
  result.normalized = result.total / static_cast<double>(std::max(a.size(), b.size()));
  return result;
}

double lay_sim_edge(const BoundingBox& a, const BoundingBox& b, const LaySimWeights& cfg) {
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  const double center = std::sqrt(dx * dx + dy * dy);
  const double shape = std::abs(a.w - b.w) + std::abs(a.h - b.h);
  const double scale = std::min(std::sqrt(a.area()), std::sqrt(b.area()));
  return scale * std::exp2(-(cfg.center_weight * center + cfg.shape_weight * shape));
}

MatchResult max_iou_match(const Layout& a, const Layout& b) {
  return match_layouts(a, b, [](const BoundingBox& x, const BoundingBox& y) { return iou(x, y); });
}

MatchResult lay_sim_match(const Layout& a, const Layout& b, const LaySimWeights& cfg) {
  return match_layouts(a, b, [&cfg](const BoundingBox& x, const BoundingBox& y) {
    return lay_sim_edge(x, y, cfg);
  });
}

double max_iou(const Layout& a, const Layout& b) { return max_iou_match(a, b).normalized; }

double lay_sim(const Layout& a, const Layout& b, const LaySimWeights& cfg) {
  return lay_sim_match(a, b, cfg).normalized;
}

FeatureCloud FeatureCloud::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  FeatureCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto doc = nlohmann::json::parse(line);
    cloud.vectors.push_back(doc.is_array() ? doc.get<std::vector<double>>()
                                           : doc.at("vec").get<std::vector<double>>());
  }
  return cloud;
}

namespace {

void moments(const FeatureCloud& c, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const auto n = static_cast<Eigen::Index>(c.size());
  const auto d = static_cast<Eigen::Index>(c.dim());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(c.vectors[static_cast<std::size_t>(i)].size()) != d) {
      throw std::invalid_argument("feature cloud rows differ in dimension");
    }
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = c.vectors[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
}

constexpr double kEigenFloor = 1e-10;

}  // namespace

double frechet_distance(const FeatureCloud& a, const FeatureCloud& b) {
  if (a.size() < 2 || b.size() < 2) throw DegenerateCloud("frechet_distance needs at least two samples per cloud");
  if (a.dim() != b.dim() || a.dim() == 0) throw std::invalid_argument("frechet_distance: dimension mismatch");

  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
  Eigen::VectorXd root_vals = eig_a.eigenvalues().unaryExpr(
      [](double l) { return l < kEigenFloor ? 0.0 : std::sqrt(l); });
  const Eigen::MatrixXd root_a =
      eig_a.eigenvectors() * root_vals.asDiagonal() * eig_a.eigenvectors().transpose();

  Eigen::MatrixXd inner = root_a * cov_b * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_inner(inner, Eigen::EigenvaluesOnly);
  double trace_root = 0.0;
  for (Eigen::Index i = 0; i < eig_inner.eigenvalues().size(); ++i) {
    const double l = eig_inner.eigenvalues()(i);
    // inner has squared units relative to the covariances.
    if (l >= kEigenFloor * kEigenFloor) trace_root += std::sqrt(l);
  }

  const double mean_term = (mu_a - mu_b).squaredNorm();
  const double value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_root;
  return std::max(0.0, value);
}

}  // namespace layoutplan
