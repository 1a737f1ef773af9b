#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "layoutplan/sampler.hpp"
#include "test_support.hpp"

using namespace layoutplan;

namespace {

std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> random_unit(std::mt19937_64& gen, std::size_t d) {
  std::normal_distribution<double> nd;
  std::vector<double> v(d);
  for (auto& x : v) x = nd(gen);
  return unit(v);
}

CandidatePool make_pool(const std::vector<std::vector<double>>& embeddings) {
  std::vector<Candidate> c;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    c.push_back({"c" + std::to_string(i), {"caption " + std::to_string(i), {}}, embeddings[i]});
  }
  return CandidatePool(std::move(c));
}

PolicyParams identity_params(std::size_t d, double scale) {
  PolicyParams p;
  p.latent_dim = d;
  p.input_dim = d;
  p.weights.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) p.at(i, i) = scale;
  return p;
}

double norm_diff_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

// Neumaier-compensated mean.
double compensated_mean(const std::vector<double>& xs) {
  double s = 0.0, c = 0.0;
  for (double x : xs) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  return (s + c) / static_cast<double>(xs.size());
}

}  // namespace

TEST_CASE("softmax") {
  const auto p = softmax(std::vector<double>{1.0, 0.0});
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-15));
  CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-3));

  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  std::vector<double> logits(9);
  for (auto& x : logits) x = 3 * nd(gen);
  auto shifted = logits;
  for (auto& x : shifted) x += 123.456;
  const auto a = softmax(logits), b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));

  const auto big = softmax(std::vector<double>{1000.0, 999.0});
  CHECK(std::isfinite(big[0]));
}

TEST_CASE("identical candidates are equally likely") {
  const auto e = unit({1.0, 2.0, 3.0});
  const CandidatePool pool = make_pool({e, e, e, e});
  const auto p = PolicyParams::initialize(3, 8, 1.5, 1);
  for (double pi : policy_probs(p, unit({0.3, -1.0, 0.2}), pool)) CHECK(pi == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("initialization makes logits gain^2 times cosine") {
  std::mt19937_64 gen(8);
  std::vector<std::vector<double>> embs;
  for (int i = 0; i < 6; ++i) embs.push_back(random_unit(gen, 5));
  const CandidatePool pool = make_pool(embs);
  const auto p = PolicyParams::initialize(5, 16, 3.0, 2);
  CHECK(p.weights.size() == 16 * 5);
  const auto q = random_unit(gen, 5);
  const auto logits = policy_logits(p, q, pool);
  for (std::size_t i = 0; i < embs.size(); ++i) {
    const double cos = std::inner_product(q.begin(), q.end(), embs[i].begin(), 0.0);
    CHECK(logits[i] == doctest::Approx(9.0 * cos).epsilon(1e-10));
  }
}

TEST_CASE("sampling") {
  std::mt19937_64 gen(9);
  std::vector<std::vector<double>> embs;
  for (int i = 0; i < 7; ++i) embs.push_back(random_unit(gen, 4));
  const CandidatePool pool = make_pool(embs);
  const auto p = PolicyParams::initialize(4, 4, 2.0, 3);
  const auto q = random_unit(gen, 4);

  SUBCASE("k equal to the pool size draws a permutation") {
    Rng rng(1);
    auto idx = sample_examples(p, q, pool, 7, rng);
    std::sort(idx.begin(), idx.end());
    CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(sample_examples(p, q, pool, 8, rng), PoolTooSmall);
  }
  SUBCASE("same seed, same draws") {
    Rng a(77), b(77);
    for (int t = 0; t < 20; ++t) CHECK(sample_examples(p, q, pool, 3, a) == sample_examples(p, q, pool, 3, b));
  }
  SUBCASE("with replacement may repeat and is not bounded by the pool") {
    Rng rng(5);
    CHECK(sample_examples(p, q, pool, 20, rng, true).size() == 20);
  }
  SUBCASE("dimension mismatch") {
    Rng rng(5);
    CHECK_THROWS_AS(sample_examples(p, std::vector<double>{1.0, 0.0}, pool, 1, rng), DimensionMismatch);
  }
}

TEST_CASE("a dominant candidate is drawn first almost always") {
  // Logits 20 and 0.
  const CandidatePool pool = make_pool({{1.0, 0.0}, {0.0, 1.0}});
  const auto p = identity_params(2, std::sqrt(20.0));
  const std::vector<double> q{1.0, 0.0};
  CHECK(policy_logits(p, q, pool)[0] == doctest::Approx(20.0));
  int hits = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    hits += sample_examples(p, q, pool, 1, rng)[0] == 0;
  }
  CHECK(hits >= 999);
}

TEST_CASE("sequence log-probability") {
  const CandidatePool pool = make_pool({{1.0, 0.0}, {0.0, 1.0}, unit({1.0, 1.0})});
  const auto p = identity_params(2, 1.0);
  const std::vector<double> q{1.0, 0.0};
  // logits 1, 0, 1/sqrt 2
  const double l0 = 1.0, l1 = 0.0, l2 = std::sqrt(0.5);
  const double z = std::exp(l0) + std::exp(l1) + std::exp(l2);
  const std::vector<std::size_t> chosen{2, 0};
  const double expected = (l2 - std::log(z)) + (l0 - std::log(std::exp(l0) + std::exp(l1)));
  CHECK(sequence_log_prob(p, q, pool, chosen) == doctest::Approx(expected).epsilon(1e-14));
  const double with_rep = (l2 - std::log(z)) + (l0 - std::log(z));
  CHECK(sequence_log_prob(p, q, pool, chosen, true) == doctest::Approx(with_rep).epsilon(1e-14));
}

TEST_CASE("log-probability gradient matches central differences") {
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<int> pick(0, 1000);
  double worst = 0.0;
  for (int t = 0; t < 64; ++t) {
    const std::size_t d = 2 + t % 5, latent = 1 + t % 4, n = 3 + t % 6, k = 1 + t % 3;
    std::vector<std::vector<double>> embs;
    for (std::size_t i = 0; i < n; ++i) embs.push_back(random_unit(gen, d));
    const CandidatePool pool = make_pool(embs);
    auto p = PolicyParams::initialize(d, latent, 1.0 + (t % 3), static_cast<std::uint64_t>(t));
    const auto q = random_unit(gen, d);
    const bool rep = t % 2 == 1;
    Rng rng(static_cast<std::uint64_t>(pick(gen)));
    const auto chosen = sample_examples(p, q, pool, k, rng, rep);
    const auto g = sequence_log_prob_gradient(p, q, pool, chosen, rep);
    std::vector<double> fd(g.size());
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
      const double w0 = p.weights[i];
      p.weights[i] = w0 + h;
      const double up = sequence_log_prob(p, q, pool, chosen, rep);
      p.weights[i] = w0 - h;
      const double down = sequence_log_prob(p, q, pool, chosen, rep);
      p.weights[i] = w0;
      fd[i] = (up - down) / (2 * h);
    }
    worst = std::max(worst, norm_diff_rel(g, fd));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("rewards") {
  const Layout gold{{{"dog", {0.1, 0.1, 0.5, 0.5}}}, std::nullopt};
  const auto same = compute_reward(gold, gold);
  CHECK(same.total == 10.0);
  CHECK(same.layout_only);

  // mIoU 0.5 from two gold dogs, one matched exactly.
  const Layout gold2{{{"dog", {0.1, 0.1, 0.2, 0.2}}, {"dog", {0.6, 0.6, 0.2, 0.2}}}, std::nullopt};
  const Layout gen1{{{"dog", {0.1, 0.1, 0.2, 0.2}}}, std::nullopt};
  const auto r = compute_reward(gen1, gold2, ImageScores{0.8, 0.4, 5.0});
  CHECK(r.miou == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.total == doctest::Approx(6.7).epsilon(1e-12));
  CHECK_FALSE(r.layout_only);

  const auto empty = compute_reward(Layout{}, gold, ImageScores{0.8, 0.4, 5.0});
  CHECK(empty.miou == 0.0);
  CHECK(empty.total == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("expected reward estimate") {
  CHECK(estimate_expected_reward(std::vector<double>{3.5}) == 3.5);
  CHECK(estimate_expected_reward(std::vector<double>{1, 2, 3, 4}) == 2.5);
  CHECK_THROWS(estimate_expected_reward(std::vector<double>{}));
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(-5.0, 15.0);
  std::uniform_int_distribution<int> n(1, 64);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> xs(static_cast<std::size_t>(n(gen)));
    for (auto& x : xs) x = u(gen);
    CHECK(std::abs(estimate_expected_reward(xs) - compensated_mean(xs)) <= 1e-12);
  }
  std::vector<RewardRecord> recs(2);
  recs[0].total = 1.0;
  recs[1].total = 2.0;
  CHECK(estimate_expected_reward(recs) == 1.5);
}

TEST_CASE("reinforce update") {
  std::mt19937_64 gen(21);
  std::vector<std::vector<double>> embs;
  for (int i = 0; i < 5; ++i) embs.push_back(random_unit(gen, 3));
  const CandidatePool pool = make_pool(embs);
  const auto p = PolicyParams::initialize(3, 4, 1.0, 6);
  const auto q = random_unit(gen, 3);

  SUBCASE("zero reward, no baseline: nothing moves") {
    const std::vector<Episode> eps{{q, {1, 3}, 0.0}, {q, {0, 2}, 0.0}};
    CHECK(reinforce_step(p, eps, pool, 0.5).weights == p.weights);
  }
  SUBCASE("rewarded choice becomes more likely") {
    const std::vector<Episode> eps{{q, {2}, 1.0}};
    const auto after = reinforce_step(p, eps, pool, 1e-2);
    CHECK(policy_probs(after, q, pool)[2] > policy_probs(p, q, pool)[2]);
  }
  SUBCASE("gradient is the reward-weighted mean of score functions") {
    const std::vector<Episode> eps{{q, {2, 0}, 3.0}, {q, {4, 1}, -1.0}};
    const auto g = reinforce_gradient(p, eps, pool, 0.5);
    const auto g0 = sequence_log_prob_gradient(p, q, pool, eps[0].chosen);
    const auto g1 = sequence_log_prob_gradient(p, q, pool, eps[1].chosen);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(g[i] == doctest::Approx((2.5 * g0[i] - 1.5 * g1[i]) / 2.0).epsilon(1e-12));
  }
  SUBCASE("non-finite reward is rejected") {
    const std::vector<Episode> eps{{q, {2}, NAN}};
    CHECK_THROWS_AS(reinforce_gradient(p, eps, pool), NonFiniteGradient);
  }
}

TEST_CASE("rng state round trip") {
  Rng a(42);
  for (int i = 0; i < 10; ++i) a.next();
  Rng b(0);
  b.restore(a.state());
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng u(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    CHECK(u.index(7) < 7);
  }
}

namespace {

struct Toy {
  CandidatePool pool;
  std::vector<TrainQuery> queries;
};

Toy toy_problem() {
  std::mt19937_64 gen(50);
  Toy t;
  std::vector<std::vector<double>> embs;
  for (int i = 0; i < 6; ++i) embs.push_back(random_unit(gen, 4));
  t.pool = make_pool(embs);
  for (int i = 0; i < 10; ++i) t.queries.push_back({"q" + std::to_string(i), "cap", random_unit(gen, 4), {}});
  return t;
}

// Reward 1 when candidate 0 is among the chosen.
RolloutFn planted_rollout() {
  return [](const std::vector<EpisodeRequest>& reqs) {
    std::vector<EpisodeOutcome> out;
    for (const auto& r : reqs) {
      EpisodeOutcome o;
      o.reward.total = std::find(r.chosen.begin(), r.chosen.end(), 0) != r.chosen.end() ? 1.0 : 0.0;
      out.push_back(o);
    }
    return out;
  };
}

}  // namespace

TEST_CASE("training is deterministic and resumable") {
  const Toy toy = toy_problem();
  TrainConfig cfg;
  cfg.shots = 2;
  cfg.batch_size = 4;
  cfg.epochs = 4;
  cfg.learning_rate = 0.5;
  cfg.latent_dim = 4;
  cfg.seed = 9;
  cfg.baseline.enabled = true;

  const auto full = run_training(cfg, toy.pool, toy.queries, planted_rollout());
  const auto again = run_training(cfg, toy.pool, toy.queries, planted_rollout());
  CHECK(full.params.weights == again.params.weights);
  CHECK(full.log.size() == 4 * 3);
  CHECK(full.final_state.step == 12);
  CHECK(full.final_state.epoch == 4);

  // Stop after the second epoch's checkpoint, then resume from disk.
  testsupport::TempDir dir;
  TrainHooks hooks;
  std::optional<Checkpoint> saved;
  hooks.on_epoch = [&](const Checkpoint& c) {
    if (c.epoch == 2) {
      c.save(dir / "ck.json");
      saved = c;
    }
  };
  hooks.keep_going = [&](const Checkpoint&) { return !saved; };
  run_training(cfg, toy.pool, toy.queries, planted_rollout(), hooks);
  REQUIRE(saved);
  const Checkpoint loaded = Checkpoint::load(dir / "ck.json");
  CHECK(loaded.params.weights == saved->params.weights);
  CHECK(loaded.rng_state == saved->rng_state);
  CHECK(loaded.baseline_value == saved->baseline_value);
  const auto resumed = run_training(cfg, toy.pool, toy.queries, planted_rollout(), {}, loaded);
  CHECK(resumed.params.weights == full.params.weights);

  TrainConfig other = cfg;
  other.learning_rate = 0.1;
  CHECK_THROWS(run_training(other, toy.pool, toy.queries, planted_rollout(), {}, loaded));
}

TEST_CASE("failed episodes count as zero reward and are reported") {
  const Toy toy = toy_problem();
  TrainConfig cfg;
  cfg.batch_size = 5;
  cfg.epochs = 1;
  cfg.latent_dim = 4;
  std::vector<std::string> errors;
  TrainHooks hooks;
  hooks.on_episode_failed = [&](std::size_t step, const EpisodeRequest&, const std::string& e) {
    errors.push_back(std::to_string(step) + ":" + e);
  };
  RolloutFn rollout = [](const std::vector<EpisodeRequest>& reqs) {
    std::vector<EpisodeOutcome> out(reqs.size());
    out[0].failed = true;
    out[0].error = "boom";
    for (std::size_t i = 1; i < out.size(); ++i) out[i].reward.total = 1.0;
    return out;
  };
  const auto res = run_training(cfg, toy.pool, toy.queries, rollout, hooks);
  REQUIRE(res.log.size() == 2);
  CHECK(res.log[0].failed == 1);
  CHECK(res.log[0].expected_reward == doctest::Approx(0.8));
  CHECK(errors == std::vector<std::string>{"1:boom", "2:boom"});
}

TEST_CASE("layout rollout scores plans against gold") {
  Toy toy = toy_problem();
  for (auto& q : toy.queries) q.gold = Layout{{{"dog", {0.1, 0.1, 0.3, 0.3}}}, std::nullopt};
  LayoutPlanner planner = [](const std::vector<IclExample>& ex, const std::string&) {
    if (ex.size() == 1 && ex[0].caption == "caption 5") throw std::runtime_error("planner down");
    return Layout{{{"dog", {0.1, 0.1, 0.3, 0.3}}}, std::nullopt};
  };
  const auto rollout = make_layout_rollout(toy.pool, toy.queries, planner, nullptr, 3);
  const auto out = rollout({{0, {1}}, {1, {5}}, {2, {2}}});
  REQUIRE(out.size() == 3);
  CHECK(out[0].reward.total == 10.0);
  CHECK(out[1].failed);
  CHECK(out[1].error.find("planner down") != std::string::npos);
  CHECK(out[2].reward.total == 10.0);
}

TEST_CASE("score fixture") {
  testsupport::TempDir dir;
  testsupport::write_file(dir / "s.jsonl", R"({"id": "a", "sim_it": 0.3, "sim_ii": 0.2, "aes": 5.5})" "\n");
  const auto m = load_score_fixture(dir / "s.jsonl");
  REQUIRE(m.count("a") == 1);
  CHECK(m.at("a").aes == 5.5);
}

TEST_CASE("batch log line") {
  BatchLog l;
  l.step = 3;
  l.expected_reward = 1.5;
  const std::string s = to_json_line(l);
  CHECK(s.rfind("{\"step\": 3, \"expected_reward\": ", 0) == 0);
  CHECK(s.find('\n') == std::string::npos);
}
