// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace owlfed {

/// Dense row-major matrix of doubles. Vectors are 1 x n tensors.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Nested initializer, e.g. Tensor2{{1, 2}, {3, 4}}. Rows must have equal length.
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 zeros_like(const Tensor2& t) { return Tensor2(t.rows_, t.cols_); }
  static Tensor2 identity(std::size_t n);
  static Tensor2 row_vector(std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  void fill(double v);

  Tensor2 transposed() const;
  /// "RxC", used in error messages.
  std::string shape_string() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain kernels. The recorded (differentiable) versions live on Tape.

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
/// out += a * b
void matmul_acc(const Tensor2& a, const Tensor2& b, Tensor2& out);
/// out += a^T * b
void matmul_tn_acc(const Tensor2& a, const Tensor2& b, Tensor2& out);
/// out += a * b^T
void matmul_nt_acc(const Tensor2& a, const Tensor2& b, Tensor2& out);

/// Row-wise softmax with max subtraction.
Tensor2 softmax_rows(const Tensor2& x);
/// Vector-Jacobian product of softmax_rows given its output y and upstream dy.
Tensor2 softmax_rows_backward(const Tensor2& y, const Tensor2& dy);

double sigmoid(double x) noexcept;
/// sigma(x) * (1 - sigma(x))
double sigmoid_derivative(double x) noexcept;

Tensor2 relu(const Tensor2& x);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes each row to mean 0 / variance 1 (population variance, eps-stabilized),
/// then applies gain and bias (both 1 x cols).
Tensor2 layer_norm(const Tensor2& x, const Tensor2& gain, const Tensor2& bias,
                   double eps = kLayerNormEps);

/// Max absolute entrywise difference; shapes must match.
double max_abs_diff(const Tensor2& a, const Tensor2& b);

}  // namespace owlfed
