#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "layoutplan/assignment.hpp"
#include "layoutplan/embedding.hpp"
#include "layoutplan/metrics.hpp"
#include "random_layouts.hpp"
#include "test_support.hpp"

using namespace layoutplan;

namespace {

Layout make(std::initializer_list<LayoutItem> items) { return Layout{items, std::nullopt}; }

double brute_assignment(const std::vector<std::vector<double>>& w) {
  const std::size_t rows = w.size(), cols = w.empty() ? 0 : w[0].size();
  std::vector<bool> used(cols, false);
  double best = 0.0;
  std::function<void(std::size_t, double)> go = [&](std::size_t r, double acc) {
    if (r == rows) {
      best = std::max(best, acc);
      return;
    }
    go(r + 1, acc);
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = true;
      go(r + 1, acc + w[r][c]);
      used[c] = false;
    }
  };
  go(0, 0.0);
  return best;
}

FeatureCloud standardized_1d(std::size_t n, double shift, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> xs(n);
  for (auto& x : xs) x = nd(gen);
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1));
  FeatureCloud c;
  for (double x : xs) c.vectors.push_back({(x - mean) / sd + shift});
  return c;
}

}  // namespace

TEST_CASE("assignment matches exhaustive search") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> dim(0, 6);
  for (int t = 0; t < 200; ++t) {
    const int r = dim(gen), c = dim(gen);
    std::vector<std::vector<double>> w(r, std::vector<double>(c));
    for (auto& row : w)
      for (auto& v : row) v = u(gen) < 0.2 ? 0.0 : u(gen);
    const auto assign = max_weight_assignment(w);
    REQUIRE(assign.size() == static_cast<std::size_t>(r));
    std::vector<int> seen;
    double total = 0.0;
    for (int i = 0; i < r; ++i) {
      if (assign[i] < 0) continue;
      seen.push_back(assign[i]);
      total += w[i][assign[i]];
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
    CHECK(total == doctest::Approx(brute_assignment(w)).epsilon(1e-12));
  }
}

TEST_CASE("max_iou examples") {
  const Layout a = make({{"dog", {0.1, 0.1, 0.5, 0.5}}});
  const Layout b = make({{"dog", {0.35, 0.35, 0.5, 0.5}}, {"cat", {0.1, 0.1, 0.2, 0.2}}});
  CHECK(max_iou(a, a) == 1.0);
  CHECK(max_iou(b, b) == 1.0);
  CHECK(max_iou(a, Layout{}) == 0.0);
  CHECK(max_iou(Layout{}, Layout{}) == 0.0);
  CHECK(max_iou(a, b) == doctest::Approx((1.0 / 7.0) / 2.0).epsilon(1e-12));
  // Labels must agree.
  CHECK(max_iou(a, make({{"cat", {0.1, 0.1, 0.5, 0.5}}})) == 0.0);
}

TEST_CASE("matching ignores item order") {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 50; ++t) {
    Layout a = testsupport::random_layout(gen, 6, {"dog", "cat"});
    Layout b = testsupport::random_layout(gen, 6, {"dog", "cat"});
    const double before = max_iou(a, b);
    std::shuffle(a.items.begin(), a.items.end(), gen);
    std::shuffle(b.items.begin(), b.items.end(), gen);
    CHECK(max_iou(a, b) == doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("lay_sim") {
  const Layout a = make({{"dog", {0.1, 0.1, 0.5, 0.5}}, {"cat", {0.2, 0.6, 0.1, 0.3}}});
  // Identical layouts: every edge is sqrt(area), normalized by n.
  const double expected = (std::sqrt(0.25) + std::sqrt(0.03)) / 2.0;
  CHECK(lay_sim(a, a) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(lay_sim(a, Layout{}) == 0.0);
  CHECK(lay_sim(Layout{}, a) == 0.0);

  const BoundingBox p{0.1, 0.1, 0.2, 0.2}, q{0.4, 0.5, 0.3, 0.2};
  // centers (0.2,0.2) and (0.55,0.6): distance 0.5315; shape delta 0.1
  const double d = std::sqrt(0.35 * 0.35 + 0.4 * 0.4);
  CHECK(lay_sim_edge(p, q) == doctest::Approx(0.2 * std::pow(2.0, -(d + 2.0 * 0.1))).epsilon(1e-12));
}

TEST_CASE("matching totals equal the brute-force optimum") {
  std::mt19937_64 gen(99);
  const std::vector<std::string> labels = {"dog", "cat", "person"};
  for (int t = 0; t < 200; ++t) {
    const Layout a = testsupport::random_layout(gen, 6, labels);
    const Layout b = testsupport::random_layout(gen, 6, labels);
    CHECK(max_iou_match(a, b).total == testsupport::brute_force_total(a, b, [](auto& x, auto& y) { return iou(x, y); }));
    CHECK(lay_sim_match(a, b).total ==
          testsupport::brute_force_total(a, b, [](auto& x, auto& y) { return lay_sim_edge(x, y); }));
  }
}

TEST_CASE("match pairs are sorted and one-to-one") {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 30; ++t) {
    const Layout a = testsupport::random_layout(gen, 6, {"dog"});
    const Layout b = testsupport::random_layout(gen, 6, {"dog"});
    const auto m = max_iou_match(a, b);
    std::set<std::size_t> bs;
    for (std::size_t i = 0; i < m.pairs.size(); ++i) {
      if (i) CHECK(m.pairs[i - 1].index_a < m.pairs[i].index_a);
      CHECK(bs.insert(m.pairs[i].index_b).second);
      CHECK(m.pairs[i].weight > 0.0);
    }
  }
}

TEST_CASE("frechet distance") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  FeatureCloud a, b;
  for (int i = 0; i < 40; ++i) {
    a.vectors.push_back({nd(gen), nd(gen), nd(gen)});
    b.vectors.push_back({nd(gen) + 0.5, 2 * nd(gen), nd(gen)});
  }
  CHECK(std::abs(frechet_distance(a, a)) <= 1e-9);

  const FeatureCloud n0 = standardized_1d(500, 0.0, 7), n1 = standardized_1d(500, 1.0, 7);
  CHECK(std::abs(frechet_distance(n0, n1) - 1.0) <= 1e-9);
  // (mu1 - mu2)^2 + (sigma1 - sigma2)^2 with a different spread
  FeatureCloud wide;
  for (const auto& v : n0.vectors) wide.vectors.push_back({3.0 * v[0]});
  CHECK(frechet_distance(n0, wide) == doctest::Approx(4.0).epsilon(1e-9));

  SUBCASE("orthogonal rotation") {
    // Q from a Householder reflection composed with a plane rotation.
    const double v[3] = {0.3, -0.5, 0.8};
    const double vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    double q[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) q[i][j] = (i == j ? 1.0 : 0.0) - 2.0 * v[i] * v[j] / vv;
    const double c = std::cos(0.7), s = std::sin(0.7);
    for (int i = 0; i < 3; ++i) {
      const double r0 = q[i][0], r1 = q[i][1];
      q[i][0] = c * r0 - s * r1;
      q[i][1] = s * r0 + c * r1;
    }
    auto rotate = [&](const FeatureCloud& in) {
      FeatureCloud out;
      for (const auto& x : in.vectors) {
        std::vector<double> y(3, 0.0);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) y[i] += q[i][j] * x[j];
        out.vectors.push_back(y);
      }
      return out;
    };
    CHECK(std::abs(frechet_distance(rotate(a), rotate(b)) - frechet_distance(a, b)) <= 1e-6);
  }

  FeatureCloud one;
  one.vectors.push_back({1.0});
  CHECK_THROWS_AS(frechet_distance(one, n0), DegenerateCloud);
  CHECK_THROWS(frechet_distance(a, n0));  // dimension mismatch
}

TEST_CASE("feature clouds load from either line form") {
  testsupport::TempDir dir;
  testsupport::write_file(dir / "f.jsonl", "[1, 2]\n{\"vec\": [3, 4]}\n\n");
  const auto c = FeatureCloud::load_jsonl(dir / "f.jsonl");
  CHECK(c.size() == 2);
  CHECK(c.vectors[1] == std::vector<double>{3, 4});
}

TEST_CASE("label mapping against fixture embeddings") {
  const auto vocab = LabelVocabulary::load_jsonl(testsupport::fixture("vocab.jsonl"));
  TableEmbedder table(testsupport::fixture("label_embeddings.jsonl"));
  auto embed = [&](const std::string& s) { return table.embed_one(s); };
  const Layout in = make({{"puppy", {0.1, 0.1, 0.2, 0.2}},
                          {"dog", {0.3, 0.3, 0.2, 0.2}},
                          {"kitten", {0.5, 0.5, 0.2, 0.2}},
                          {"sofa", {0.1, 0.5, 0.2, 0.2}},
                          {"man", {0.6, 0.1, 0.2, 0.2}}});
  const Layout out = map_labels(in, vocab, embed);
  REQUIRE(out.size() == 5);
  CHECK(out.items[0].label == "dog");
  CHECK(out.items[1].label == "dog");
  CHECK(out.items[2].label == "cat");
  CHECK(out.items[3].label == "couch");
  CHECK(out.items[4].label == "person");
  CHECK(out.items[0].box == in.items[0].box);
}

TEST_CASE("vocabulary tie goes to the lower index") {
  LabelVocabulary v({"a", "b"}, {{1.0, 0.0}, {0.0, 1.0}});
  const double r = std::sqrt(0.5);
  CHECK(v.nearest({r, r}) == 0);
  CHECK(v.nearest({0.1, 0.9}) == 1);
}
