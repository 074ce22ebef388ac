#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "octopus/dpo.hpp"
#include "octopus/errors.hpp"
#include "octopus/io.hpp"

namespace octopus {
namespace {

struct PairSetup {
  SimLvlm model;
  CdConfig cd;
  Dataset ds;
  std::vector<PreferencePair> prefs;
  std::vector<TrainingPair> pairs;

  explicit PairSetup(std::size_t n = 40) {
    DatasetConfig cfg;
    cfg.n_describe = n;
    ds = gen_dataset(cfg, 21);
    prefs = generative_pairs(model, ds, Criterion::kChair, 10, 22, cd);
    pairs = prepare_pairs(model, ds, prefs, cd);
  }
};

HeadConfig light_config() {
  HeadConfig c;
  c.layers = 1;
  c.mlp_hidden = 16;
  c.ffn_hidden = 16;
  return c;
}

HeadParams random_head(const HeadConfig& cfg, std::uint64_t seed) {
  HeadParams p = init_head(cfg, seed);
  Rng rng(seed, "perturb");
  for (double& v : p.mutable_flat()) v += 0.15 * rng.normal();
  return p;
}

TEST(DpoLoss, Examples) {
  for (double x : {-3.0, 0.0, 0.25, 17.5}) EXPECT_NEAR(dpo_loss(x, x, 1.0), std::log(2.0), 1e-12);
  EXPECT_LT(dpo_loss(20.0, 0.0, 1.0), 1e-8);
  EXPECT_NEAR(dpo_loss(0.0, 20.0, 1.0), 20.0, 1e-8);
  EXPECT_GT(dpo_loss(-500.0, 500.0, 1.0), 999.0);
  EXPECT_TRUE(std::isfinite(dpo_loss(-500.0, 500.0, 1.0)));
}

TEST(DpoLoss, OnlyTheGapMatters) {
  // dyadic values keep the shifted differences exact
  for (int i = -8; i <= 8; ++i) {
    const double p = i / 8.0, n = -i / 4.0;
    for (double c : {-2.5, 0.125, 6.0}) {
      EXPECT_EQ(dpo_loss(p, n, 1.0), dpo_loss(p + c, n + c, 1.0));
      EXPECT_EQ(dpo_loss(p, n, 0.5), dpo_loss(p + c, n + c, 0.5));
    }
  }
}

TEST(WorkflowLogprob, UniformHeadEmptyAndForced) {
  PairSetup s(10);
  ASSERT_FALSE(s.pairs.empty());
  HeadParams head = init_head(HeadConfig{}, 1);
  for (double& v : head.mutable_view("mlp.w2")) v = 0.0;
  for (double& v : head.mutable_view("mlp.b2")) v = 0.0;
  const ReplayedSide& side = s.pairs[0].pos;
  EXPECT_NEAR(workflow_logprob(head, side),
              -static_cast<double>(side.actions.size()) * std::log(4.0), 1e-12);
  EXPECT_EQ(workflow_logprob(head, ReplayedSide{}), 0.0);

  ReplayedSide three;
  three.actions = {Action::kS2, Action::kS2, Action::kS2};
  three.snapshots = {side.snapshots[0], side.snapshots[0], side.snapshots[0]};
  head.mutable_view("mlp.b2")[2] = 10.0;
  EXPECT_NEAR(workflow_logprob(head, three), 0.0, 1e-3);
}

TEST(WorkflowLogprob, GradientVariantReturnsSameValue) {
  PairSetup s(10);
  const HeadParams head = random_head(HeadConfig{}, 2);
  RealVector g(head.flat().size(), 0.0);
  for (const TrainingPair& p : s.pairs) {
    EXPECT_EQ(workflow_logprob_grad(head, p.pos, 1.0, g), workflow_logprob(head, p.pos));
  }
}

TEST(DpoLossGrad, ValueMatchesLoss) {
  PairSetup s(10);
  const HeadParams head = random_head(HeadConfig{}, 3);
  RealVector g(head.flat().size(), 0.0);
  for (const TrainingPair& p : s.pairs) {
    const double want = dpo_loss(workflow_logprob(head, p.pos), workflow_logprob(head, p.neg), 1.0);
    EXPECT_EQ(dpo_loss_grad(head, p, 1.0, 1.0, g), want);
  }
}

TEST(DpoLossGrad, ZeroGapPairHasExactlyZeroGradient) {
  PairSetup s(10);
  const HeadParams head = random_head(HeadConfig{}, 4);
  TrainingPair same = s.pairs[0];
  same.neg = same.pos;
  RealVector g(head.flat().size(), 0.0);
  EXPECT_NEAR(dpo_loss_grad(head, same, 1.0, 1.0, g), std::log(2.0), 1e-12);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(GradCheck, RandomHeadRandomPair) {
  PairSetup s(10);
  const HeadParams head = random_head(light_config(), 5);
  const auto shortest = std::min_element(
      s.pairs.begin(), s.pairs.end(), [](const TrainingPair& a, const TrainingPair& b) {
        return a.pos.actions.size() + a.neg.actions.size() <
               b.pos.actions.size() + b.neg.actions.size();
      });
  const GradCheckResult r = grad_check(head, *shortest, 1.0);
  EXPECT_EQ(r.coordinates, head.flat().size());
  EXPECT_LT(r.max_rel_error, 1e-5) << "worst " << r.worst_index;
}

TEST(GradCheck, ZeroGapPairChecksClean) {
  PairSetup s(10);
  const HeadParams head = random_head(light_config(), 6);
  TrainingPair same = s.pairs[0];
  same.neg = same.pos;
  const GradCheckResult r = grad_check(head, same, 1.0);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(PreparePairs, UnknownSampleAndTampering) {
  PairSetup s(10);
  auto prefs = s.prefs;
  prefs[0].sample_id = 999;
  EXPECT_THROW(prepare_pairs(s.model, s.ds, prefs, s.cd), DataIntegrityError);
  prefs = s.prefs;
  prefs[0].pos.tokens.back() = tok::kA;
  EXPECT_THROW(prepare_pairs(s.model, s.ds, prefs, s.cd), DataIntegrityError);
}

TEST(PreparePairs, SnapshotsMatchDecode) {
  PairSetup s(10);
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    const TrainingPair& tp = s.pairs[i];
    ASSERT_EQ(tp.pos.snapshots.size(), tp.pos.actions.size());
    const DecodeResult r = run_workflow(s.model, s.ds[tp.sample_id], tp.pos.actions, s.cd);
    for (std::size_t t = 0; t < r.steps(); ++t) EXPECT_EQ(tp.pos.snapshots[t], r.snapshot(t));
  }
}

TEST(Train, SinglePairOverfits) {
  PairSetup s(10);
  HeadParams head = init_head(HeadConfig{}, 7);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 1;
  // equal lengths start the pair near indifference
  const auto it = std::find_if(s.pairs.begin(), s.pairs.end(), [](const TrainingPair& p) {
    return p.pos.actions.size() == p.neg.actions.size();
  });
  ASSERT_NE(it, s.pairs.end());
  const std::vector<TrainingPair> one = {*it};
  const LossReport rep = train(head, one, cfg);
  ASSERT_EQ(rep.step_loss.size(), 200u);
  EXPECT_NEAR(rep.step_loss[0], std::log(2.0), 0.1);
  for (std::size_t i = 11; i < rep.step_loss.size(); ++i) {
    EXPECT_LE(rep.step_loss[i], rep.step_loss[i - 1]) << "step " << i;
  }
  EXPECT_LT(rep.step_loss.back(), 0.05);
  EXPECT_EQ(rep.epoch_accuracy.back(), 1.0);
}

TEST(Train, ZeroLearningRateLeavesParams) {
  PairSetup s(10);
  HeadParams head = init_head(HeadConfig{}, 8);
  const HeadParams before = head;
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 2;
  train(head, s.pairs, cfg);
  EXPECT_TRUE(head.same_values(before));
}

TEST(Train, DeterministicPerSeed) {
  PairSetup s(30);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  HeadParams a = init_head(HeadConfig{}, 9), b = init_head(HeadConfig{}, 9),
             c = init_head(HeadConfig{}, 9);
  const LossReport ra = train(a, s.pairs, cfg);
  const LossReport rb = train(b, s.pairs, cfg);
  EXPECT_TRUE(a.same_values(b));
  EXPECT_EQ(ra.step_loss, rb.step_loss);
  cfg.seed = 4;
  train(c, s.pairs, cfg);
  EXPECT_FALSE(a.same_values(c));
}

TEST(Train, ReportShapeAndFiniteLoss) {
  PairSetup s(30);
  HeadParams head = init_head(HeadConfig{}, 10);
  TrainConfig cfg;
  cfg.epochs = 2;
  const LossReport rep = train(head, s.pairs, cfg);
  const std::size_t steps = (s.pairs.size() + 3) / 4;
  EXPECT_EQ(rep.step_loss.size(), 2 * steps);
  EXPECT_EQ(rep.grad_norm.size(), 2 * steps);
  EXPECT_EQ(rep.epoch_loss.size(), 2u);
  for (double l : rep.step_loss) {
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_GT(l, 0.0);
  }
}

TEST(Train, RejectsBadConfigAndEmptySet) {
  PairSetup s(10);
  HeadParams head = init_head(HeadConfig{}, 11);
  TrainConfig cfg;
  EXPECT_THROW(train(head, {}, cfg), std::invalid_argument);
  cfg.beta = 0.0;
  EXPECT_THROW(train(head, s.pairs, cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lr = -1.0;
  EXPECT_THROW(train(head, s.pairs, cfg), std::invalid_argument);
}

TEST(Train, LeavesModelAndDataUntouched) {
  PairSetup s(20);
  const std::string model_fp = model_fingerprint(s.model.config(), s.cd);
  const std::string data = dataset_to_jsonl(s.ds);
  HeadParams head = init_head(HeadConfig{}, 12);
  TrainConfig cfg;
  cfg.epochs = 1;
  train(head, s.pairs, cfg);
  EXPECT_EQ(model_fingerprint(s.model.config(), s.cd), model_fp);
  EXPECT_EQ(dataset_to_jsonl(s.ds), data);
}

}  // namespace
}  // namespace octopus
