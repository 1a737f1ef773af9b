// Feedback-driven in-context example sampler: a softmax selection policy
// over a candidate pool, trained with REINFORCE on layout/image rewards.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "layoutplan/layout.hpp"
#include "layoutplan/numeric.hpp"
#include "layoutplan/prompt.hpp"

namespace layoutplan {

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PoolTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear map f(e) = W e from text-embedding space to the latent space the
/// policy scores in. W is latent_dim x input_dim, row-major.
struct PolicyParams {
  std::size_t latent_dim = 128;
  std::size_t input_dim = 0;
  std::vector<double> weights;

  /// Scaled semi-orthogonal initialization: the columns (or rows, when
  /// input_dim > latent_dim) are orthonormal, times `gain`. With
  /// latent_dim >= input_dim this makes the initial logits gain^2 * cosine.
  static PolicyParams initialize(std::size_t input_dim, std::size_t latent_dim, double gain,
                                 std::uint64_t seed);

  double& at(std::size_t r, std::size_t c) { return weights[r * input_dim + c]; }
  double at(std::size_t r, std::size_t c) const { return weights[r * input_dim + c]; }

  std::vector<double> project(std::span<const double> embedding) const;
};

struct Candidate {
  std::string id;
  IclExample example;
  std::vector<double> embedding;  // unit-norm caption embedding
};

class CandidatePool {
 public:
  CandidatePool() = default;
  explicit CandidatePool(std::vector<Candidate> candidates);

  std::size_t size() const { return candidates_.size(); }
  std::size_t dim() const { return dim_; }
  const Candidate& operator[](std::size_t i) const { return candidates_[i]; }
  const std::vector<Candidate>& candidates() const { return candidates_; }

 private:
  std::vector<Candidate> candidates_;
  std::size_t dim_ = 0;
};

/// <f(e_c), f(e_query)> for every candidate c.
std::vector<double> policy_logits(const PolicyParams& p, std::span<const double> query,
                                  const CandidatePool& pool);

std::vector<double> softmax(std::span<const double> logits);

std::vector<double> policy_probs(const PolicyParams& p, std::span<const double> query,
                                 const CandidatePool& pool);

/// Draws `k` candidates. Without replacement each draw renormalizes over the
/// candidates not yet taken.
std::vector<std::size_t> sample_examples(const PolicyParams& p, std::span<const double> query,
                                         const CandidatePool& pool, std::size_t k, Rng& rng,
                                         bool with_replacement = false);

/// Log-probability of drawing `chosen` in that order (sum over the draws).
double sequence_log_prob(const PolicyParams& p, std::span<const double> query,
                         const CandidatePool& pool, std::span<const std::size_t> chosen,
                         bool with_replacement = false);

/// d sequence_log_prob / dW, row-major like PolicyParams::weights.
std::vector<double> sequence_log_prob_gradient(const PolicyParams& p, std::span<const double> query,
                                               const CandidatePool& pool,
                                               std::span<const std::size_t> chosen,
                                               bool with_replacement = false);

struct ImageScores {
  double sim_it = 0.0;
  double sim_ii = 0.0;
  double aes = 0.0;
};

inline constexpr double kMiouRewardWeight = 10.0;
inline constexpr double kSimRewardWeight = 1.0;
inline constexpr double kAesRewardWeight = 0.1;

struct RewardRecord {
  double miou = 0.0;
  double sim_it = 0.0;
  double sim_ii = 0.0;
  double aes = 0.0;
  double total = 0.0;
  bool layout_only = true;
};

/// total = 10 * mIoU + (sim_it + sim_ii) + 0.1 * aes; image terms are zero
/// when no scores are supplied.
RewardRecord compute_reward(const Layout& generated, const Layout& gold,
                            const std::optional<ImageScores>& image_scores = std::nullopt);

/// Monte Carlo estimate of the expected reward: mean of episode totals.
double estimate_expected_reward(std::span<const double> totals);
double estimate_expected_reward(std::span<const RewardRecord> episodes);

struct Episode {
  std::vector<double> query_embedding;
  std::vector<std::size_t> chosen;
  double reward = 0.0;
};

/// (1/N) sum_i (R_i - baseline) * d log pi(chosen_i | query_i) / dW.
std::vector<double> reinforce_gradient(const PolicyParams& p, std::span<const Episode> episodes,
                                       const CandidatePool& pool, double baseline = 0.0,
                                       bool with_replacement = false);

/// One ascent step W += lr * reinforce_gradient(...).
PolicyParams reinforce_step(const PolicyParams& p, std::span<const Episode> episodes,
                            const CandidatePool& pool, double learning_rate, double baseline = 0.0,
                            bool with_replacement = false);

struct BaselineConfig {
  bool enabled = false;
  double momentum = 0.9;
};

struct TrainConfig {
  std::size_t shots = 2;
  std::size_t batch_size = 8;
  std::size_t epochs = 80;
  double learning_rate = 2e-4;
  std::uint64_t seed = 0;
  BaselineConfig baseline;
  bool with_replacement = false;
  double init_gain = 1.0;
  std::size_t latent_dim = 128;

  /// SHA-256 over the canonical JSON form; stored in checkpoints.
  std::string hash() const;
};

struct TrainQuery {
  std::string id;
  std::string caption;
  std::vector<double> embedding;
  Layout gold;
};

struct EpisodeRequest {
  std::size_t query_index;
  std::vector<std::size_t> chosen;
};

struct EpisodeOutcome {
  RewardRecord reward;
  bool failed = false;
  std::string error;
};

/// Evaluates a whole batch of episodes; the outcome vector is aligned with
/// the requests. Implementations may run the episodes concurrently.
using RolloutFn = std::function<std::vector<EpisodeOutcome>(const std::vector<EpisodeRequest>&)>;

struct BatchLog {
  std::size_t step = 0;
  double expected_reward = 0.0;
  double mean_miou = 0.0;
  double mean_sim = 0.0;
  double mean_aes = 0.0;
  std::size_t failed = 0;
};

std::string to_json_line(const BatchLog& log);

struct Checkpoint {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed batches
  PolicyParams params;
  std::string rng_state;
  std::string config_hash;
  double baseline_value = 0.0;
  bool baseline_ready = false;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

struct TrainHooks {
  std::function<void(const BatchLog&)> on_batch;
  /// step is the 1-based index of the batch the episode belongs to.
  std::function<void(std::size_t step, const EpisodeRequest&, const std::string& error)> on_episode_failed;
  /// Called after every epoch with the state needed to resume.
  std::function<void(const Checkpoint&)> on_epoch;
  /// Called after every batch; training stops when it returns false.
  std::function<bool(const Checkpoint&)> keep_going;
};

struct TrainResult {
  PolicyParams params;
  std::vector<BatchLog> log;
  Checkpoint final_state;
};

/// Policy-gradient loop: per epoch shuffle the queries, cut batches of
/// batch_size, sample shots per query, roll the batch out, update W.
TrainResult run_training(const TrainConfig& cfg, const CandidatePool& pool,
                         const std::vector<TrainQuery>& queries, const RolloutFn& rollout,
                         const TrainHooks& hooks = {}, const std::optional<Checkpoint>& resume = std::nullopt);

/// Score fixture: JSON Lines `{id, sim_it, sim_ii, aes}`.
std::map<std::string, ImageScores> load_score_fixture(const std::filesystem::path& path);

using LayoutPlanner =
    std::function<Layout(const std::vector<IclExample>& examples, const std::string& caption)>;
using ImageScoreFn = std::function<std::optional<ImageScores>(const TrainQuery& query, const Layout& generated)>;

/// Rollout that plans a layout per episode (up to `max_concurrency` at once)
/// and scores it against the query's gold layout. Planner or scorer errors
/// yield a failed episode with reward 0.
RolloutFn make_layout_rollout(const CandidatePool& pool, const std::vector<TrainQuery>& queries,
                              LayoutPlanner planner, ImageScoreFn scorer = nullptr,
                              int max_concurrency = 4);

}  // namespace layoutplan
