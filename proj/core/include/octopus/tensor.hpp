#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace octopus {

using RealVector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  /// Appends one row; `values.size()` must equal cols() (or set cols on an
  /// empty 0x0 matrix).
  void push_row(std::span<const double> values);

  /// First `n` rows as a new matrix.
  Matrix top_rows(std::size_t n) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Numerically stable softmax (max subtraction). Throws on empty input.
RealVector softmax(std::span<const double> x);

/// log(softmax(x)) computed via log-sum-exp.
RealVector log_softmax(std::span<const double> x);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> x);

/// softmax(Q K^T / sqrt(d_k)) V.
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v);

bool all_finite(std::span<const double> x);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

/// Adam moments and hyperparameters for one flat parameter vector.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  RealVector m;
  RealVector v;
  long step = 0;

  static AdamState for_size(std::size_t n, double lr);
};

/// One bias-corrected Adam update applied in place.
void adam_update(std::span<double> params, std::span<const double> grads,
                 AdamState& state);

/// Same update, returning the new parameters and leaving `params` untouched.
RealVector adam_step(std::span<const double> params, std::span<const double> grads,
                     AdamState& state);

}  // namespace octopus
