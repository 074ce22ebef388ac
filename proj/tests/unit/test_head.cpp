#include <cmath>

#include <gtest/gtest.h>

#include "octopus/errors.hpp"
#include "octopus/head.hpp"
#include "octopus/head_reference.hpp"
#include "octopus/rng.hpp"

namespace octopus {
namespace {

HeadConfig small_config() {
  HeadConfig c;
  c.d = 8;
  c.heads = 2;
  c.mlp_hidden = 12;
  c.ffn_hidden = 10;
  c.max_len = 16;
  return c;
}

Matrix random_hidden(Rng& rng, std::size_t rows, std::size_t d) {
  Matrix h(rows, d);
  for (double& v : h.flat()) v = rng.normal();
  return h;
}

HeadParams perturbed_head(const HeadConfig& cfg, std::uint64_t seed, double sigma) {
  HeadParams p = init_head(cfg, seed);
  Rng rng(seed, "perturb");
  for (double& v : p.mutable_flat()) v += sigma * rng.normal();
  return p;
}

TEST(HeadConfig, ParamCountMatchesLayout) {
  for (const HeadConfig& c : {HeadConfig{}, small_config()}) {
    const auto layout = param_layout(c);
    std::size_t offset = 0;
    for (const ParamTensor& t : layout) {
      EXPECT_EQ(t.offset, offset) << t.name;
      offset += t.size();
    }
    EXPECT_EQ(offset, c.param_count());
    const std::size_t d = c.d, f = c.ffn_hidden, h = c.mlp_hidden;
    const std::size_t per_layer = 4 * d + 4 * d * d + f * d + f + d * f + d;
    EXPECT_EQ(c.param_count(),
              d + c.max_len * d + c.layers * per_layer + h * d + h + c.actions * h + c.actions);
    EXPECT_EQ(init_head(c, 0).flat().size(), c.param_count());
  }
}

TEST(HeadConfig, CanonicalOrder) {
  const auto layout = param_layout(HeadConfig{});
  const std::vector<std::string> first = {
      "eye", "pos", "layers.0.ln1.gamma", "layers.0.ln1.beta", "layers.0.attn.wq",
      "layers.0.attn.wk", "layers.0.attn.wv", "layers.0.attn.wo", "layers.0.ln2.gamma",
      "layers.0.ln2.beta", "layers.0.ffn.w1", "layers.0.ffn.b1", "layers.0.ffn.w2",
      "layers.0.ffn.b2", "layers.1.ln1.gamma"};
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(layout[i].name, first[i]);
  const std::vector<std::string> last = {"mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(layout[layout.size() - 4 + i].name, last[i]);
  EXPECT_EQ(layout.back().size(), 4u);
}

TEST(HeadConfig, Validation) {
  HeadConfig c;
  c.heads = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = HeadConfig{};
  c.actions = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(InitHead, DeterministicAndShaped) {
  const HeadParams a = init_head(HeadConfig{}, 5), b = init_head(HeadConfig{}, 5);
  EXPECT_TRUE(a.same_values(b));
  EXPECT_FALSE(a.same_values(init_head(HeadConfig{}, 6)));
  for (double g : a.view("layers.1.ln2.gamma")) EXPECT_EQ(g, 1.0);
  for (double v : a.view("layers.0.ln1.beta")) EXPECT_EQ(v, 0.0);
  for (double v : a.view("mlp.b1")) EXPECT_EQ(v, 0.0);
  const auto w = a.view("layers.0.attn.wq");
  double ss = 0.0;
  for (double v : w) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(w.size())), 0.02, 0.003);
  double eye = 0.0;
  for (double v : a.view("eye")) eye += std::abs(v);
  EXPECT_GT(eye, 0.0);
}

TEST(InitHead, FreshHeadIsNearUniform) {
  Rng rng(1, "fresh");
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const HeadParams p = init_head(HeadConfig{}, seed);
    const Matrix h = random_hidden(rng, 10 + seed % 30, 32);
    for (double q : softmax(head_logits(p, h))) {
      EXPECT_GE(q, 0.15);
      EXPECT_LE(q, 0.45);
    }
  }
}

TEST(HeadForward, ShapeAndZeroClassifier) {
  HeadParams p = init_head(HeadConfig{}, 3);
  Rng rng(2, "zero");
  const Matrix h = random_hidden(rng, 12, 32);
  EXPECT_EQ(head_logits(p, h).size(), 4u);
  for (double& v : p.mutable_view("mlp.w2")) v = 0.0;
  for (double& v : p.mutable_view("mlp.b2")) v = 0.0;
  const RealVector l = head_logits(p, h);
  for (double v : l) EXPECT_EQ(v, 0.0);
  for (double q : softmax(l)) EXPECT_EQ(q, 0.25);
}

TEST(HeadForward, DeterministicTrace) {
  const HeadParams p = perturbed_head(HeadConfig{}, 4, 0.1);
  Rng rng(3, "det");
  const Matrix h = random_hidden(rng, 20, 32);
  const ForwardTrace a = head_forward(p, h), b = head_forward(p, h);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.h_eye, b.h_eye);
  ASSERT_EQ(a.layers.size(), b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_EQ(a.layers[l].x_in, b.layers[l].x_in);
    EXPECT_EQ(a.layers[l].gf, b.layers[l].gf);
  }
  EXPECT_EQ(head_logits(p, h), a.logits);
}

TEST(HeadForward, MatchesReferenceImplementation) {
  Rng rng(4, "ref");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const HeadParams p = perturbed_head(HeadConfig{}, seed, 0.2);
    const Matrix h = random_hidden(rng, 5 + 9 * seed, 32);
    const RealVector got = head_logits(p, h);
    const auto want =
        reference::head_logits<double>(p.config(), p.layout(), p.flat().data(), h);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(HeadForward, RejectsBadInput) {
  const HeadParams p = init_head(HeadConfig{}, 1);
  EXPECT_THROW(head_forward(p, Matrix(64, 32)), std::invalid_argument);
  EXPECT_NO_THROW(head_forward(p, Matrix(63, 32)));
  EXPECT_THROW(head_forward(p, Matrix(4, 31)), std::invalid_argument);
}

TEST(HeadForward, HiddenStatesMatter) {
  const HeadParams p = perturbed_head(HeadConfig{}, 7, 0.2);
  Rng rng(5, "append");
  Matrix h = random_hidden(rng, 10, 32);
  const RealVector before = head_logits(p, h);
  h.push_row(random_hidden(rng, 1, 32).row(0));
  EXPECT_NE(head_logits(p, h), before);
}

TEST(SelectAction, ArgmaxWithEnumTieBreak) {
  EXPECT_EQ(select_action(RealVector{0, 0, 0, 1}), Action::kS3);
  EXPECT_EQ(select_action(RealVector{2, 2, 2, 2}), Action::kNull);
  EXPECT_EQ(select_action(RealVector{0, 5, 5, 1}), Action::kS1);
  Rng rng(6, "shift");
  for (int i = 0; i < 100; ++i) {
    RealVector h(4), g(4);
    const double c = 100.0 * rng.normal();
    for (std::size_t k = 0; k < 4; ++k) {
      h[k] = rng.normal();
      g[k] = h[k] + c;
    }
    EXPECT_EQ(select_action(h), select_action(g));
  }
}

TEST(RelativeError, SymmetricWithFloor) {
  EXPECT_EQ(relative_error(1.0, 2.0), 0.5);
  EXPECT_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_EQ(relative_error(1e-13, 0.0), 0.1);
  Rng rng(7, "sym");
  for (int i = 0; i < 100; ++i) {
    const double a = rng.normal(), b = rng.normal();
    EXPECT_EQ(relative_error(a, b), relative_error(b, a));
  }
}

TEST(HeadBackward, ZeroUpstreamGivesZeroGradient) {
  const HeadParams p = perturbed_head(HeadConfig{}, 8, 0.1);
  Rng rng(8, "zero-grad");
  const Matrix h = random_hidden(rng, 14, 32);
  const HeadGradient g = head_backward(p, head_forward(p, h), RealVector(4, 0.0));
  for (double v : g.params) EXPECT_EQ(v, 0.0);
  for (double v : g.inputs.flat()) EXPECT_EQ(v, 0.0);
}

TEST(HeadBackward, EyeGradientIsNonzero) {
  const HeadParams p = perturbed_head(HeadConfig{}, 9, 0.1);
  Rng rng(9, "eye");
  const Matrix h = random_hidden(rng, 14, 32);
  const HeadGradient g = head_backward(p, head_forward(p, h), RealVector{1, 1, 1, 1});
  const ParamTensor& eye = p.tensor("eye");
  double norm = 0.0;
  for (std::size_t i = 0; i < eye.size(); ++i) norm += std::abs(g.params[eye.offset + i]);
  EXPECT_GT(norm, 1e-6);
}

TEST(HeadBackward, StaleTraceIsAContractViolation) {
  HeadParams p = init_head(HeadConfig{}, 10);
  Rng rng(10, "stale");
  const Matrix h = random_hidden(rng, 6, 32);
  const ForwardTrace tr = head_forward(p, h);
  p.mutable_flat()[0] += 1e-3;
  EXPECT_THROW(head_backward(p, tr, RealVector(4, 1.0)), ContractViolation);
  const HeadParams other = init_head(HeadConfig{}, 10);
  EXPECT_THROW(head_backward(other, head_forward(p, h), RealVector(4, 1.0)), ContractViolation);
}

TEST(HeadBackward, AccumulateAddsParameterGradient) {
  const HeadParams p = perturbed_head(HeadConfig{}, 11, 0.1);
  Rng rng(11, "acc");
  const Matrix h = random_hidden(rng, 9, 32);
  const RealVector d = {0.3, -1.0, 0.2, 0.5};
  const ForwardTrace tr = head_forward(p, h);
  const HeadGradient g = head_backward(p, tr, d);
  RealVector acc(p.flat().size(), 1.0);
  head_backward_accumulate(p, tr, d, acc);
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_NEAR(acc[i], 1.0 + g.params[i], 1e-15);
}

TEST(HeadBackward, MatchesFiniteDifferencesOnThreeSeeds) {
  for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
    const HeadParams p = perturbed_head(small_config(), seed, 0.15);
    Rng rng(seed, "gc-input");
    const Matrix h = random_hidden(rng, 6 + seed % 5, 8);
    const RealVector d = {1.0, 1.0, 1.0, 1.0};
    const GradCheckResult r = head_grad_check(p, h, d);
    EXPECT_EQ(r.coordinates, p.flat().size());
    EXPECT_LT(r.max_rel_error, 1e-5) << "seed " << seed << " worst " << r.worst_index;
  }
}

TEST(HeadBackward, InputGradientMatchesFiniteDifferences) {
  const HeadParams p = perturbed_head(small_config(), 31, 0.15);
  Rng rng(31, "dh");
  const Matrix h = random_hidden(rng, 7, 8);
  const RealVector d = {0.5, -0.2, 1.0, 0.1};
  const HeadGradient g = head_backward(p, head_forward(p, h), d);
  auto objective = [&](const Matrix& x) {
    const auto l = reference::head_logits<long double>(p.config(), p.layout(),
                                                       std::vector<long double>(p.flat().begin(), p.flat().end()).data(), x);
    long double s = 0.0L;
    for (std::size_t k = 0; k < 4; ++k) s += d[k] * l[k];
    return s;
  };
  for (std::size_t r = 0; r < h.rows(); ++r) {
    for (std::size_t c = 0; c < h.cols(); ++c) {
      Matrix up = h, down = h;
      up(r, c) += 1e-5;
      down(r, c) -= 1e-5;
      const double fd = static_cast<double>((objective(up) - objective(down)) / 2e-5L);
      EXPECT_LT(relative_error(g.inputs(r, c), fd), 1e-5) << r << "," << c;
    }
  }
}

}  // namespace
}  // namespace octopus
