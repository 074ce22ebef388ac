#include <cmath>
#include <numeric>
#include <stdexcept>

#include <gtest/gtest.h>

#include "octopus/rng.hpp"
#include "octopus/tensor.hpp"

namespace octopus {
namespace {

RealVector random_vector(Rng& rng, std::size_t n, double scale) {
  RealVector x(n);
  for (double& v : x) v = scale * (2.0 * rng.uniform() - 1.0);
  return x;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.normal();
  return m;
}

TEST(Softmax, TwoZerosIsHalfHalf) {
  const RealVector p = softmax(RealVector{0.0, 0.0});
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(Softmax, LogThree) {
  const RealVector p = softmax(RealVector{0.0, std::log(3.0)});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, EmptyThrows) {
  EXPECT_THROW(softmax(RealVector{}), std::invalid_argument);
  EXPECT_THROW(log_softmax(RealVector{}), std::invalid_argument);
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(1, "softmax-shift");
  for (int trial = 0; trial < 100; ++trial) {
    const RealVector x = random_vector(rng, 7, 10.0);
    const double c = 50.0 * (rng.uniform() - 0.5);
    RealVector y = x;
    for (double& v : y) v += c;
    const RealVector px = softmax(x);
    const RealVector py = softmax(y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(px[i], py[i], 1e-12);
  }
}

TEST(Softmax, SumsToOneUpToLargeMagnitudes) {
  Rng rng(2, "softmax-sum");
  for (int trial = 0; trial < 200; ++trial) {
    const RealVector x = random_vector(rng, 32, 1e3);
    const RealVector p = softmax(x);
    double s = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(argmax(p), argmax(x));
  }
}

TEST(Softmax, LogSoftmaxMatchesLogOfSoftmax) {
  Rng rng(3, "log-softmax");
  const RealVector x = random_vector(rng, 9, 5.0);
  const RealVector p = softmax(x);
  const RealVector lp = log_softmax(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(lp[i], std::log(p[i]), 1e-12);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax(RealVector{1.0, 3.0, 3.0, 2.0}), 1u);
  EXPECT_EQ(argmax(RealVector{0.0, 0.0, 0.0}), 0u);
}

TEST(Softplus, StableAtExtremes) {
  EXPECT_EQ(softplus(0.0), std::log(2.0));
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-12);
  EXPECT_GT(softplus(-800.0), -1e-300);
  EXPECT_LT(softplus(-800.0), 1e-300);
}

TEST(Attention, SingleKeyReturnsValueRow) {
  Matrix q(3, 4, 0.7), k(1, 4, -0.2), v(1, 5);
  for (std::size_t c = 0; c < 5; ++c) v(0, c) = 0.1 * static_cast<double>(c) - 0.3;
  const Matrix out = scaled_dot_attention(q, k, v);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(out(r, c), v(0, c));
  }
}

TEST(Attention, IdenticalKeysGiveColumnMean) {
  Rng rng(4, "attn-mean");
  const Matrix q = random_matrix(rng, 2, 3);
  Matrix k(4, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) k(r, c) = 0.5 - 0.25 * static_cast<double>(c);
  }
  const Matrix v = random_matrix(rng, 4, 2);
  const Matrix out = scaled_dot_attention(q, k, v);
  for (std::size_t c = 0; c < 2; ++c) {
    const double mean = (v(0, c) + v(1, c) + v(2, c) + v(3, c)) / 4.0;
    EXPECT_NEAR(out(0, c), mean, 1e-14);
    EXPECT_NEAR(out(1, c), mean, 1e-14);
  }
}

TEST(Attention, TwoByTwoMatchesStraightLineComputation) {
  Rng rng(5, "attn-2x2");
  const Matrix q = random_matrix(rng, 2, 2), k = random_matrix(rng, 2, 2),
               v = random_matrix(rng, 2, 2);
  const Matrix out = scaled_dot_attention(q, k, v);
  const double s = std::sqrt(2.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const double a0 = (q(i, 0) * k(0, 0) + q(i, 1) * k(0, 1)) / s;
    const double a1 = (q(i, 0) * k(1, 0) + q(i, 1) * k(1, 1)) / s;
    const double e0 = std::exp(a0), e1 = std::exp(a1);
    const double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
    EXPECT_NEAR(out(i, 0), w0 * v(0, 0) + w1 * v(1, 0), 1e-14);
    EXPECT_NEAR(out(i, 1), w0 * v(0, 1) + w1 * v(1, 1), 1e-14);
  }
}

TEST(Attention, OutputsInsideValueHull) {
  Rng rng(6, "attn-hull");
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix q = random_matrix(rng, 5, 4), k = random_matrix(rng, 6, 4),
                 v = random_matrix(rng, 6, 3);
    const Matrix out = scaled_dot_attention(q, k, v);
    for (std::size_t c = 0; c < 3; ++c) {
      double lo = v(0, c), hi = v(0, c);
      for (std::size_t r = 1; r < 6; ++r) {
        lo = std::min(lo, v(r, c));
        hi = std::max(hi, v(r, c));
      }
      for (std::size_t r = 0; r < 5; ++r) {
        EXPECT_GE(out(r, c), lo - 1e-12);
        EXPECT_LE(out(r, c), hi + 1e-12);
      }
    }
  }
}

TEST(Attention, ShapeMismatchThrows) {
  EXPECT_THROW(scaled_dot_attention(Matrix(2, 3), Matrix(2, 4), Matrix(2, 1)),
               std::invalid_argument);
  EXPECT_THROW(scaled_dot_attention(Matrix(2, 3), Matrix(2, 3), Matrix(3, 1)),
               std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  const RealVector p = {0.3, -1.2, 5.0};
  AdamState s = AdamState::for_size(3, 0.1);
  EXPECT_EQ(adam_step(p, RealVector(3, 0.0), s), p);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState s = AdamState::for_size(1, 0.1);
  const RealVector p = adam_step(RealVector{2.0}, RealVector{1.0}, s);
  EXPECT_NEAR(2.0 - p[0], 0.1, 1e-7);
}

TEST(Adam, QuadraticTrajectoryMatchesTextbookLoop) {
  // f(x) = 0.5 * sum c_i x_i^2, gradient c_i x_i
  const RealVector c = {1.0, 3.0, 0.5};
  RealVector x = {1.0, -2.0, 0.7};
  AdamState s = AdamState::for_size(3, 0.05);

  RealVector y = x, m(3, 0.0), v(3, 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05;
  for (int t = 1; t <= 5; ++t) {
    RealVector g(3);
    for (int i = 0; i < 3; ++i) g[i] = c[i] * x[i];
    x = adam_step(x, g, s);
    for (int i = 0; i < 3; ++i) {
      const double gi = c[i] * y[i];
      m[i] = b1 * m[i] + (1 - b1) * gi;
      v[i] = b2 * v[i] + (1 - b2) * gi * gi;
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      y[i] = y[i] - lr * mh / (std::sqrt(vh) + eps);
    }
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], y[i], 1e-14) << "step " << t;
  }
}

TEST(Adam, ShapeMismatchThrows) {
  AdamState s = AdamState::for_size(2, 0.1);
  EXPECT_THROW(adam_step(RealVector{1.0, 2.0}, RealVector{1.0}, s), std::invalid_argument);
}

TEST(Gaussian, ZeroSigmaIsZero) {
  Rng rng(7, "g");
  for (double v : gaussian(rng, 50, 0.0)) EXPECT_EQ(v, 0.0);
}

TEST(Gaussian, SameSeedSameDraws) {
  Rng a(8, "noise"), b(8, "noise");
  EXPECT_EQ(gaussian(a, 100, 1.5), gaussian(b, 100, 1.5));
}

TEST(Gaussian, MomentsOfTenThousandDraws) {
  Rng rng(9, "moments");
  const RealVector x = gaussian(rng, 10000, 1.0);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / 10000.0;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= 10000.0;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Gaussian, BadArgumentsThrow) {
  Rng rng(10, "bad");
  EXPECT_THROW(gaussian(rng, 0, 1.0), std::invalid_argument);
  EXPECT_THROW(gaussian(rng, 3, -1.0), std::invalid_argument);
}

TEST(Rng, DerivedStreamsAreIndependentAndStable) {
  const Rng root(11, "root");
  Rng a = root.derive(0), b = root.derive(1), a2 = root.derive(0);
  const auto x = a.next_u64();
  EXPECT_EQ(x, a2.next_u64());
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(Rng(11, "root").key(), Rng(11, "other").key());
  EXPECT_NE(Rng(11, "root").key(), Rng(12, "root").key());
}

TEST(Rng, UniformRangeAndBelow) {
  Rng rng(12, "u");
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
  EXPECT_THROW(rng.below(0), std::invalid_argument);
}

TEST(Matrix, PushRowAndTopRows) {
  Matrix m;
  m.push_row(RealVector{1.0, 2.0});
  m.push_row(RealVector{3.0, 4.0});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_THROW(m.push_row(RealVector{1.0}), std::invalid_argument);
  const Matrix top = m.top_rows(1);
  EXPECT_EQ(top.rows(), 1u);
  EXPECT_EQ(top(0, 1), 2.0);
}

}  // namespace
}  // namespace octopus
