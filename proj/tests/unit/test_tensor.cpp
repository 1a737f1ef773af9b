#include "doctest.h"

#include <cmath>
#include <random>

#include "layoutplan/tensor.hpp"

using namespace layoutplan;

namespace {

Tensor2D random_tensor(std::size_t r, std::size_t c, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Tensor2D t(r, c);
  for (auto& v : t.data()) v = nd(gen);
  return t;
}

Tensor2D naive_product(const Tensor2D& a, const Tensor2D& b) {
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("construction and access") {
  const Tensor2D t{{1, 2, 3}, {4, 5, 6}};
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(t.transpose() == Tensor2D{{1, 4}, {2, 5}, {3, 6}});
  CHECK(t.slice_rows(1, 2) == Tensor2D{{4, 5, 6}});
  CHECK(t.row(0)[1] == 2);
  CHECK_THROWS_AS((Tensor2D{{1, 2}, {3}}), ShapeMismatch);
  CHECK_THROWS_AS(Tensor2D(2, 2, std::vector<double>{1, 2, 3}), ShapeMismatch);
  CHECK_THROWS(t.slice_rows(1, 3));
}

TEST_CASE("products agree with a triple loop") {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 1 + t % 4, k = 1 + t % 5, n = 1 + t % 3;
    const Tensor2D a = random_tensor(m, k, gen), b = random_tensor(k, n, gen);
    CHECK(max_abs_diff(matmul(a, b), naive_product(a, b)) <= 1e-14);
    CHECK(max_abs_diff(matmul_tn(a.transpose(), b), naive_product(a, b)) <= 1e-14);
    CHECK(max_abs_diff(matmul_nt(a, b.transpose()), naive_product(a, b)) <= 1e-14);
  }
  CHECK_THROWS_AS(matmul(Tensor2D(2, 3), Tensor2D(2, 3)), ShapeMismatch);
  CHECK(matmul(Tensor2D(0, 3), Tensor2D(3, 2)).rows() == 0);
}

TEST_CASE("elementwise helpers") {
  const Tensor2D a{{1, 2}, {3, 4}}, b{{5, 6}, {7, 8}};
  CHECK(a + b == Tensor2D{{6, 8}, {10, 12}});
  CHECK(b - a == Tensor2D{{4, 4}, {4, 4}});
  CHECK(a * 2.0 == Tensor2D{{2, 4}, {6, 8}});
  CHECK(hadamard(a, b) == Tensor2D{{5, 12}, {21, 32}});
  CHECK(vstack(a, b).rows() == 4);
  CHECK(column_sums(a) == Tensor2D{{4, 6}});
  CHECK(sum(a) == 10);
  CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(30.0)));
  CHECK_THROWS_AS(a + Tensor2D(1, 2), ShapeMismatch);
  CHECK_THROWS_AS(require_shape(a, 2, 3, "a"), ShapeMismatch);
  Tensor2D bad = a;
  bad(0, 0) = NAN;
  CHECK_FALSE(bad.all_finite());
  CHECK(a.all_finite());
}

TEST_CASE("row softmax") {
  const Tensor2D s = softmax_rows(Tensor2D{{0, 0}, {1000, 0}, {1, 2}});
  CHECK(s(0, 0) == 0.5);
  CHECK(s(1, 0) == 1.0);
  CHECK(s(1, 1) == doctest::Approx(0.0));
  CHECK(s(2, 0) + s(2, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s(2, 1) == doctest::Approx(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0))));
}
