#include "octopus/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace octopus {

void Matrix::push_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) {
    cols_ = values.size();
  }
  if (values.size() != cols_) {
    throw std::invalid_argument("Matrix::push_row: expected " + std::to_string(cols_) +
                                " columns, got " + std::to_string(values.size()));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::top_rows(std::size_t n) const {
  if (n > rows_) throw std::invalid_argument("Matrix::top_rows: n exceeds rows");
  Matrix out(n, cols_);
  std::copy_n(data_.begin(), n * cols_, out.data_.begin());
  return out;
}

RealVector softmax(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  RealVector out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

RealVector log_softmax(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("log_softmax: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double xi : x) sum += std::exp(xi - mx);
  const double lse = mx + std::log(sum);
  RealVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

std::size_t argmax(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols()) {
    throw std::invalid_argument("scaled_dot_attention: Q and K column counts differ");
  }
  if (k.rows() != v.rows()) {
    throw std::invalid_argument("scaled_dot_attention: K and V row counts differ");
  }
  if (k.rows() == 0) throw std::invalid_argument("scaled_dot_attention: no keys");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix out(q.rows(), v.cols());
  RealVector scores(k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
      scores[j] = s * scale;
    }
    const RealVector w = softmax(scores);
    for (std::size_t j = 0; j < v.rows(); ++j) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += w[j] * v(j, c);
    }
  }
  return out;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

AdamState AdamState::for_size(std::size_t n, double lr) {
  AdamState s;
  s.lr = lr;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads,
                 AdamState& state) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_update: params/grads size mismatch");
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_update: moment size mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

RealVector adam_step(std::span<const double> params, std::span<const double> grads,
                     AdamState& state) {
  RealVector out(params.begin(), params.end());
  adam_update(out, grads, state);
  return out;
}

}  // namespace octopus
