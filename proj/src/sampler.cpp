#include "layoutplan/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "layoutplan/llm_client.hpp"
#include "layoutplan/metrics.hpp"

namespace layoutplan {

using nlohmann::json;

// ---- policy ---------------------------------------------------------------

namespace {

void orthonormalize(std::vector<std::vector<double>>& vecs) {
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    // Two passes of modified Gram-Schmidt.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        double proj = 0.0;
        for (std::size_t k = 0; k < vecs[i].size(); ++k) proj += vecs[i][k] * vecs[j][k];
        for (std::size_t k = 0; k < vecs[i].size(); ++k) vecs[i][k] -= proj * vecs[j][k];
      }
    }
    double norm = 0.0;
    for (double v : vecs[i]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::runtime_error("orthonormalize: degenerate draw");
    for (double& v : vecs[i]) v /= norm;
  }
}

}  // namespace

PolicyParams PolicyParams::initialize(std::size_t input_dim, std::size_t latent_dim, double gain,
                                      std::uint64_t seed) {
  if (input_dim == 0 || latent_dim == 0) throw std::invalid_argument("PolicyParams: zero dimension");
  PolicyParams p;
  p.input_dim = input_dim;
  p.latent_dim = latent_dim;
  p.weights.assign(input_dim * latent_dim, 0.0);
  Rng rng(seed);
  const bool by_columns = latent_dim >= input_dim;
  const std::size_t count = by_columns ? input_dim : latent_dim;
  const std::size_t length = by_columns ? latent_dim : input_dim;
  std::vector<std::vector<double>> vecs(count, std::vector<double>(length));
  for (auto& v : vecs)
    for (double& x : v) x = rng.normal();
  orthonormalize(vecs);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < length; ++k) {
      if (by_columns) {
        p.at(k, i) = gain * vecs[i][k];
      } else {
        p.at(i, k) = gain * vecs[i][k];
      }
    }
  }
  return p;
}

std::vector<double> PolicyParams::project(std::span<const double> embedding) const {
  if (embedding.size() != input_dim) {
    throw DimensionMismatch("embedding has dimension " + std::to_string(embedding.size()) +
                            ", policy expects " + std::to_string(input_dim));
  }
  std::vector<double> out(latent_dim, 0.0);
  for (std::size_t r = 0; r < latent_dim; ++r) {
    const double* row = weights.data() + r * input_dim;
    double s = 0.0;
    for (std::size_t c = 0; c < input_dim; ++c) s += row[c] * embedding[c];
    out[r] = s;
  }
  return out;
}

CandidatePool::CandidatePool(std::vector<Candidate> candidates) : candidates_(std::move(candidates)) {
  if (candidates_.empty()) return;
  dim_ = candidates_.front().embedding.size();
  for (const auto& c : candidates_) {
    if (c.embedding.size() != dim_) throw DimensionMismatch("candidate embeddings differ in dimension");
    double n = 0.0;
    for (double v : c.embedding) n += v * v;
    if (std::abs(std::sqrt(n) - 1.0) > 1e-6) {
      throw std::invalid_argument("candidate '" + c.id + "' embedding is not unit-norm");
    }
  }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_dims(const PolicyParams& p, std::span<const double> query, const CandidatePool& pool) {
  if (query.size() != p.input_dim) throw DimensionMismatch("query embedding dimension mismatch");
  if (pool.size() > 0 && pool.dim() != p.input_dim) {
    throw DimensionMismatch("candidate embedding dimension mismatch");
  }
}

struct Projected {
  std::vector<double> query;                    // f(e_y)
  std::vector<std::vector<double>> candidates;  // f(e_c)
  std::vector<double> logits;
};

Projected project_all(const PolicyParams& p, std::span<const double> query, const CandidatePool& pool) {
  check_dims(p, query, pool);
  Projected out;
  out.query = p.project(query);
  out.candidates.reserve(pool.size());
  out.logits.reserve(pool.size());
  for (const auto& c : pool.candidates()) {
    out.candidates.push_back(p.project(c.embedding));
    out.logits.push_back(dot(out.candidates.back(), out.query));
  }
  return out;
}

// Probabilities over the `available` subset; zero elsewhere.
std::vector<double> masked_softmax(const std::vector<double>& logits, const std::vector<char>& available) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (available[i]) mx = std::max(mx, logits[i]);
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!available[i]) continue;
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::size_t draw(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

void check_k(std::size_t k, const CandidatePool& pool, bool with_replacement) {
  if (pool.size() == 0 || (!with_replacement && k > pool.size())) {
    throw PoolTooSmall("cannot draw " + std::to_string(k) + " examples from a pool of " +
                       std::to_string(pool.size()));
  }
}

// d log P(chosen) / d logits.
std::vector<double> logit_gradient(const std::vector<double>& logits, std::span<const std::size_t> chosen,
                                   bool with_replacement, double* log_prob) {
  std::vector<char> available(logits.size(), 1);
  std::vector<double> g(logits.size(), 0.0);
  double lp = 0.0;
  for (std::size_t c : chosen) {
    if (c >= logits.size()) throw std::out_of_range("chosen index outside the pool");
    if (!available[c]) throw std::invalid_argument("chosen index repeated in a draw without replacement");
    const auto probs = masked_softmax(logits, available);
    lp += std::log(probs[c]);
    g[c] += 1.0;
    for (std::size_t j = 0; j < g.size(); ++j) g[j] -= probs[j];
    if (!with_replacement) available[c] = 0;
  }
  if (log_prob) *log_prob = lp;
  return g;
}

}  // namespace

std::vector<double> policy_logits(const PolicyParams& p, std::span<const double> query,
                                  const CandidatePool& pool) {
  return project_all(p, query, pool).logits;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> l(logits.begin(), logits.end());
  return masked_softmax(l, std::vector<char>(l.size(), 1));
}

std::vector<double> policy_probs(const PolicyParams& p, std::span<const double> query,
                                 const CandidatePool& pool) {
  return softmax(policy_logits(p, query, pool));
}

std::vector<std::size_t> sample_examples(const PolicyParams& p, std::span<const double> query,
                                         const CandidatePool& pool, std::size_t k, Rng& rng,
                                         bool with_replacement) {
  check_k(k, pool, with_replacement);
  const auto logits = policy_logits(p, query, pool);
  std::vector<char> available(pool.size(), 1);
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto probs = masked_softmax(logits, available);
    const std::size_t c = draw(probs, rng);
    out.push_back(c);
    if (!with_replacement) available[c] = 0;
  }
  return out;
}

double sequence_log_prob(const PolicyParams& p, std::span<const double> query, const CandidatePool& pool,
                         std::span<const std::size_t> chosen, bool with_replacement) {
  double lp = 0.0;
  logit_gradient(policy_logits(p, query, pool), chosen, with_replacement, &lp);
  return lp;
}

namespace {

// Accumulates scale * d logP / dW into grad. With s_j = f_j . f_q and
// f = W e: dW = f_q (sum_j g_j e_j)^T + (sum_j g_j f_j) e_q^T.
void accumulate_gradient(const PolicyParams& p, std::span<const double> query, const CandidatePool& pool,
                         std::span<const std::size_t> chosen, bool with_replacement, double scale,
                         std::vector<double>& grad) {
  const auto proj = project_all(p, query, pool);
  const auto g = logit_gradient(proj.logits, chosen, with_replacement, nullptr);
  std::vector<double> ge(p.input_dim, 0.0);
  std::vector<double> gf(p.latent_dim, 0.0);
  for (std::size_t j = 0; j < pool.size(); ++j) {
    if (g[j] == 0.0) continue;
    const auto& e = pool[j].embedding;
    for (std::size_t c = 0; c < p.input_dim; ++c) ge[c] += g[j] * e[c];
    for (std::size_t r = 0; r < p.latent_dim; ++r) gf[r] += g[j] * proj.candidates[j][r];
  }
  for (std::size_t r = 0; r < p.latent_dim; ++r) {
    double* row = grad.data() + r * p.input_dim;
    const double a = scale * proj.query[r];
    const double b = scale * gf[r];
    for (std::size_t c = 0; c < p.input_dim; ++c) row[c] += a * ge[c] + b * query[c];
  }
}

}  // namespace

std::vector<double> sequence_log_prob_gradient(const PolicyParams& p, std::span<const double> query,
                                               const CandidatePool& pool, std::span<const std::size_t> chosen,
                                               bool with_replacement) {
  std::vector<double> grad(p.weights.size(), 0.0);
  accumulate_gradient(p, query, pool, chosen, with_replacement, 1.0, grad);
  return grad;
}

RewardRecord compute_reward(const Layout& generated, const Layout& gold,
                            const std::optional<ImageScores>& image_scores) {
  RewardRecord r;
  r.miou = max_iou(generated, gold);
  if (image_scores) {
    r.sim_it = image_scores->sim_it;
    r.sim_ii = image_scores->sim_ii;
    r.aes = image_scores->aes;
    r.layout_only = false;
  }
  r.total = kMiouRewardWeight * r.miou + kSimRewardWeight * (r.sim_it + r.sim_ii) + kAesRewardWeight * r.aes;
  return r;
}

double estimate_expected_reward(std::span<const double> totals) {
  if (totals.empty()) throw std::invalid_argument("estimate_expected_reward: empty batch");
  double s = 0.0;
  for (double t : totals) s += t;
  return s / static_cast<double>(totals.size());
}

double estimate_expected_reward(std::span<const RewardRecord> episodes) {
  std::vector<double> totals;
  totals.reserve(episodes.size());
  for (const auto& e : episodes) totals.push_back(e.total);
  return estimate_expected_reward(totals);
}

std::vector<double> reinforce_gradient(const PolicyParams& p, std::span<const Episode> episodes,
                                       const CandidatePool& pool, double baseline, bool with_replacement) {
  std::vector<double> grad(p.weights.size(), 0.0);
  if (episodes.empty()) return grad;
  const double inv_n = 1.0 / static_cast<double>(episodes.size());
  for (const auto& ep : episodes) {
    const double advantage = ep.reward - baseline;
    if (advantage == 0.0) continue;
    accumulate_gradient(p, ep.query_embedding, pool, ep.chosen, with_replacement, advantage * inv_n, grad);
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFiniteGradient("REINFORCE gradient has non-finite entries");
  }
  return grad;
}

PolicyParams reinforce_step(const PolicyParams& p, std::span<const Episode> episodes, const CandidatePool& pool,
                            double learning_rate, double baseline, bool with_replacement) {
  const auto grad = reinforce_gradient(p, episodes, pool, baseline, with_replacement);
  PolicyParams out = p;
  for (std::size_t i = 0; i < out.weights.size(); ++i) out.weights[i] += learning_rate * grad[i];
  return out;
}

// ---- training -------------------------------------------------------------

std::string TrainConfig::hash() const {
  json j;
  j["shots"] = shots;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["learning_rate"] = learning_rate;
  j["seed"] = seed;
  j["baseline"] = baseline.enabled ? json{{"moving_average", baseline.momentum}} : json("off");
  j["with_replacement"] = with_replacement;
  j["init_gain"] = init_gain;
  j["latent_dim"] = latent_dim;
  return sha256_hex(j.dump());
}

std::string to_json_line(const BatchLog& log) {
  json j;
  j["step"] = log.step;
  j["expected_reward"] = log.expected_reward;
  j["mean_miou"] = log.mean_miou;
  j["mean_sim"] = log.mean_sim;
  j["mean_aes"] = log.mean_aes;
  j["failed"] = log.failed;
  // nlohmann::json objects sort keys; emit in the documented order instead.
  std::string out = "{";
  bool first = true;
  for (const char* key : {"step", "expected_reward", "mean_miou", "mean_sim", "mean_aes", "failed"}) {
    if (!first) out += ", ";
    first = false;
    out += '"';
    out += key;
    out += "\": ";
    out += j[key].dump();
  }
  out += "}";
  return out;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["latent_dim"] = params.latent_dim;
  j["input_dim"] = params.input_dim;
  j["W"] = params.weights;
  j["rng_state"] = rng_state;
  j["config_hash"] = config_hash;
  j["baseline"] = {{"value", baseline_value}, {"ready", baseline_ready}};
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const json j = json::parse(in);
  Checkpoint c;
  c.epoch = j.at("epoch").get<std::size_t>();
  c.step = j.at("step").get<std::size_t>();
  c.params.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.params.input_dim = j.at("input_dim").get<std::size_t>();
  c.params.weights = j.at("W").get<std::vector<double>>();
  if (c.params.weights.size() != c.params.latent_dim * c.params.input_dim) {
    throw std::runtime_error("checkpoint W has the wrong size");
  }
  c.rng_state = j.at("rng_state").get<std::string>();
  c.config_hash = j.at("config_hash").get<std::string>();
  if (j.contains("baseline")) {
    c.baseline_value = j["baseline"].value("value", 0.0);
    c.baseline_ready = j["baseline"].value("ready", false);
  }
  return c;
}

TrainResult run_training(const TrainConfig& cfg, const CandidatePool& pool, const std::vector<TrainQuery>& queries,
                         const RolloutFn& rollout, const TrainHooks& hooks, const std::optional<Checkpoint>& resume) {
  if (cfg.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  check_k(cfg.shots, pool, cfg.with_replacement);
  if (queries.empty()) throw std::invalid_argument("no training queries");
  for (const auto& q : queries) {
    if (q.embedding.size() != pool.dim()) throw DimensionMismatch("query '" + q.id + "' embedding dimension mismatch");
  }

  Checkpoint state;
  Rng rng(cfg.seed);
  if (resume) {
    if (resume->config_hash != cfg.hash()) {
      throw std::invalid_argument("checkpoint was written with a different training configuration");
    }
    state = *resume;
    rng.restore(state.rng_state);
  } else {
    state.params = PolicyParams::initialize(pool.dim(), cfg.latent_dim, cfg.init_gain, cfg.seed);
    state.config_hash = cfg.hash();
  }

  TrainResult result;
  std::vector<std::size_t> order(queries.size());
  bool stop = false;
  for (std::size_t epoch = state.epoch; epoch < cfg.epochs && !stop; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<EpisodeRequest> requests;
      for (std::size_t i = start; i < end; ++i) {
        const auto& q = queries[order[i]];
        requests.push_back({order[i], sample_examples(state.params, q.embedding, pool, cfg.shots, rng,
                                                      cfg.with_replacement)});
      }
      const auto outcomes = rollout(requests);
      if (outcomes.size() != requests.size()) throw std::runtime_error("rollout returned the wrong number of outcomes");

      std::vector<Episode> episodes;
      BatchLog log;
      std::vector<double> totals;
      for (std::size_t i = 0; i < requests.size(); ++i) {
        const auto& o = outcomes[i];
        const double reward = o.failed ? 0.0 : o.reward.total;
        episodes.push_back({queries[requests[i].query_index].embedding, requests[i].chosen, reward});
        totals.push_back(reward);
        if (o.failed) {
          ++log.failed;
          if (hooks.on_episode_failed) hooks.on_episode_failed(state.step + 1, requests[i], o.error);
          continue;
        }
        log.mean_miou += o.reward.miou;
        log.mean_sim += o.reward.sim_it + o.reward.sim_ii;
        log.mean_aes += o.reward.aes;
      }
      const double n = static_cast<double>(requests.size());
      log.mean_miou /= n;
      log.mean_sim /= n;
      log.mean_aes /= n;
      log.expected_reward = estimate_expected_reward(totals);

      const double baseline = cfg.baseline.enabled ? state.baseline_value : 0.0;
      state.params = reinforce_step(state.params, episodes, pool, cfg.learning_rate, baseline, cfg.with_replacement);
      if (cfg.baseline.enabled) {
        state.baseline_value = state.baseline_ready
                                   ? cfg.baseline.momentum * state.baseline_value +
                                         (1.0 - cfg.baseline.momentum) * log.expected_reward
                                   : log.expected_reward;
        state.baseline_ready = true;
      }

      ++state.step;
      log.step = state.step;
      result.log.push_back(log);
      if (hooks.on_batch) hooks.on_batch(log);
      if (hooks.keep_going) {
        state.rng_state = rng.state();
        if (!hooks.keep_going(state)) stop = true;
      }
    }
    if (!stop) {
      state.epoch = epoch + 1;
      state.rng_state = rng.state();
      if (hooks.on_epoch) hooks.on_epoch(state);
    }
  }
  state.rng_state = rng.state();
  result.params = state.params;
  result.final_state = state;
  return result;
}

std::map<std::string, ImageScores> load_score_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score fixture " + path.string());
  std::map<std::string, ImageScores> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = json::parse(line);
    out[j.at("id").get<std::string>()] = {j.at("sim_it").get<double>(), j.at("sim_ii").get<double>(),
                                           j.at("aes").get<double>()};
  }
  return out;
}

RolloutFn make_layout_rollout(const CandidatePool& pool, const std::vector<TrainQuery>& queries,
                              LayoutPlanner planner, ImageScoreFn scorer, int max_concurrency) {
  return [&pool, &queries, planner = std::move(planner), scorer = std::move(scorer),
          max_concurrency](const std::vector<EpisodeRequest>& requests) {
    std::vector<EpisodeOutcome> outcomes(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        const auto& req = requests[i];
        const auto& q = queries.at(req.query_index);
        try {
          std::vector<IclExample> examples;
          for (std::size_t c : req.chosen) examples.push_back(pool[c].example);
          const Layout generated = planner(examples, q.caption);
          std::optional<ImageScores> scores;
          if (scorer) scores = scorer(q, generated);
          outcomes[i].reward = compute_reward(generated, q.gold, scores);
        } catch (const std::exception& e) {
          outcomes[i].failed = true;
          outcomes[i].error = e.what();
        }
      }
    };
    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(1, max_concurrency)), requests.size());
    {
      std::vector<std::jthread> threads;
      for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    }
    return outcomes;
  };
}

}  // namespace layoutplan
