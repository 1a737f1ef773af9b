#include "layoutplan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace layoutplan {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ShapeMismatch("Tensor2D: data length != rows * cols");
}

Tensor2D::Tensor2D(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeMismatch("Tensor2D: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2D Tensor2D::transpose() const {
  Tensor2D t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Tensor2D Tensor2D::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) throw ShapeMismatch("slice_rows out of range");
  return Tensor2D(end - begin, cols_,
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * cols_)));
}

bool Tensor2D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2D& Tensor2D::operator+=(const Tensor2D& other) {
  require_shape(other, rows_, cols_, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor2D& Tensor2D::operator-=(const Tensor2D& other) {
  require_shape(other, rows_, cols_, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor2D& Tensor2D::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor2D operator+(Tensor2D a, const Tensor2D& b) { return a += b; }
Tensor2D operator-(Tensor2D a, const Tensor2D& b) { return a -= b; }
Tensor2D operator*(Tensor2D a, double s) { return a *= s; }

void require_shape(const Tensor2D& t, std::size_t rows, std::size_t cols, const std::string& what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ShapeMismatch(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                        std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
  }
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dimensions differ");
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows()) throw ShapeMismatch("matmul_tn: row counts differ");
  Tensor2D out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  return out;
}

Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) throw ShapeMismatch("matmul_nt: column counts differ");
  Tensor2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  return out;
}

Tensor2D hadamard(const Tensor2D& a, const Tensor2D& b) {
  require_shape(b, a.rows(), a.cols(), "hadamard");
  Tensor2D out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

Tensor2D vstack(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols() && !a.empty() && !b.empty()) throw ShapeMismatch("vstack: column counts differ");
  const std::size_t cols = a.empty() ? b.cols() : a.cols();
  std::vector<double> data = a.data();
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor2D(a.rows() + b.rows(), cols, std::move(data));
}

Tensor2D softmax_rows(const Tensor2D& x) {
  Tensor2D out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(x(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= z;
  }
  return out;
}

Tensor2D column_sums(const Tensor2D& x) {
  Tensor2D out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
  return out;
}

double sum(const Tensor2D& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
  require_shape(b, a.rows(), a.cols(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double frobenius_norm(const Tensor2D& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace layoutplan
