// Dense row-major matrix used by the relation kernel.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace layoutplan {

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2D(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Tensor2D transpose() const;
  /// Rows [begin, end).
  Tensor2D slice_rows(std::size_t begin, std::size_t end) const;
  bool all_finite() const;

  Tensor2D& operator+=(const Tensor2D& other);
  Tensor2D& operator-=(const Tensor2D& other);
  Tensor2D& operator*=(double s);

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2D operator+(Tensor2D a, const Tensor2D& b);
Tensor2D operator-(Tensor2D a, const Tensor2D& b);
Tensor2D operator*(Tensor2D a, double s);

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
/// a^T b without materializing the transpose.
Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b);
/// a b^T without materializing the transpose.
Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b);
Tensor2D hadamard(const Tensor2D& a, const Tensor2D& b);
/// [a; b]
Tensor2D vstack(const Tensor2D& a, const Tensor2D& b);
/// Row-wise numerically stable softmax.
Tensor2D softmax_rows(const Tensor2D& x);
/// 1 x cols column sums.
Tensor2D column_sums(const Tensor2D& x);
double sum(const Tensor2D& x);
double max_abs_diff(const Tensor2D& a, const Tensor2D& b);
double frobenius_norm(const Tensor2D& x);

void require_shape(const Tensor2D& t, std::size_t rows, std::size_t cols, const std::string& what);

}  // namespace layoutplan
