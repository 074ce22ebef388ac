#pragma once

// Straightforward forward pass of the decision head, generic over the
// scalar type. It keeps no trace and computes every row of every layer, so
// it doubles as an independent check of head_forward. Finite-difference
// gradient checks run it in long double to push rounding noise well below
// the truncation error of the difference quotient.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "octopus/head.hpp"

namespace octopus::reference {

template <typename T>
std::vector<T> head_logits(const HeadConfig& cfg, const std::vector<ParamTensor>& layout,
                           const T* p, const Matrix& hidden) {
  using std::exp;
  using std::sqrt;
  using std::tanh;
  const std::size_t d = cfg.d;
  const std::size_t n = hidden.rows() + 1;
  std::size_t cursor = 0;
  auto next = [&]() { return p + layout[cursor++].offset; };

  const T* eye = next();
  const T* pos = next();
  std::vector<std::vector<T>> x(n, std::vector<T>(d));
  for (std::size_t c = 0; c < d; ++c) x[0][c] = eye[c] + pos[c];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) x[i][c] = T(hidden(i - 1, c)) + pos[i * d + c];
  }

  auto layer_norm = [&](const std::vector<T>& v, const T* g, const T* b) {
    T mu = 0;
    for (T e : v) mu += e;
    mu /= T(d);
    T var = 0;
    for (T e : v) var += (e - mu) * (e - mu);
    var /= T(d);
    const T r = T(1) / sqrt(var + T(1e-5));
    std::vector<T> out(d);
    for (std::size_t c = 0; c < d; ++c) out[c] = (v[c] - mu) * r * g[c] + b[c];
    return out;
  };
  auto affine = [](const std::vector<T>& v, const T* w, const T* b, std::size_t out_dim) {
    std::vector<T> out(out_dim);
    for (std::size_t o = 0; o < out_dim; ++o) {
      T s = b ? b[o] : T(0);
      for (std::size_t c = 0; c < v.size(); ++c) s += w[o * v.size() + c] * v[c];
      out[o] = s;
    }
    return out;
  };
  auto gelu = [](T v) {
    const T k = T(0.7978845608028654);
    return T(0.5) * v * (T(1) + tanh(k * (v + T(0.044715) * v * v * v)));
  };

  const std::size_t dh = d / cfg.heads;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const T* g1 = next();
    const T* b1 = next();
    const T* wq = next();
    const T* wk = next();
    const T* wv = next();
    const T* wo = next();
    const T* g2 = next();
    const T* b2 = next();
    const T* fw1 = next();
    const T* fb1 = next();
    const T* fw2 = next();
    const T* fb2 = next();
    std::vector<std::vector<T>> q(n), k(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = layer_norm(x[i], g1, b1);
      q[i] = affine(a, wq, nullptr, d);
      k[i] = affine(a, wk, nullptr, d);
      v[i] = affine(a, wv, nullptr, d);
    }
    std::vector<std::vector<T>> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<T> o(d, T(0));
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        std::vector<T> s(n);
        T mx = T(-1e300);
        for (std::size_t j = 0; j < n; ++j) {
          T acc = 0;
          for (std::size_t e = 0; e < dh; ++e) acc += q[i][h * dh + e] * k[j][h * dh + e];
          s[j] = acc / sqrt(T(dh));
          mx = std::max(mx, s[j]);
        }
        T z = 0;
        for (auto& e : s) {
          e = exp(e - mx);
          z += e;
        }
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t e = 0; e < dh; ++e) o[h * dh + e] += s[j] / z * v[j][h * dh + e];
        }
      }
      auto mid = affine(o, wo, nullptr, d);
      for (std::size_t c = 0; c < d; ++c) mid[c] += x[i][c];
      auto f = affine(layer_norm(mid, g2, b2), fw1, fb1, cfg.ffn_hidden);
      for (auto& e : f) e = gelu(e);
      auto z = affine(f, fw2, fb2, d);
      for (std::size_t c = 0; c < d; ++c) z[c] += mid[c];
      y[i] = std::move(z);
    }
    x = std::move(y);
  }
  const T* m1 = next();
  const T* mb1 = next();
  const T* m2 = next();
  const T* mb2 = next();
  auto a1 = affine(x[0], m1, mb1, cfg.mlp_hidden);
  for (auto& e : a1) e = gelu(e);
  return affine(a1, m2, mb2, cfg.actions);
}

/// Central differences on every coordinate. `quick(i, x)` evaluates the
/// objective with coordinate i set to x in double precision; when its
/// quotient disagrees with the analytic value by more than 1e-7 (relative),
/// the quotient is recomputed with `precise(i, x)` in long double so that
/// rounding noise cannot masquerade as a gradient error.
template <typename Quick, typename Precise>
GradCheckResult central_difference_check(std::span<const double> values,
                                         std::span<const double> analytic, double h,
                                         Quick quick, Precise precise) {
  GradCheckResult out;
  out.coordinates = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    double numeric = (quick(i, orig + h) - quick(i, orig - h)) / (2.0 * h);
    if (relative_error(analytic[i], numeric) > 1e-7) {
      const long double x = orig;
      const long double up = precise(i, x + h);
      const long double down = precise(i, x - h);
      numeric = static_cast<double>((up - down) / (2.0L * h));
    }
    const double err = relative_error(analytic[i], numeric);
    if (i == 0 || err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst_index = i;
      out.analytic = analytic[i];
      out.numeric = numeric;
    }
  }
  return out;
}

}  // namespace octopus::reference
