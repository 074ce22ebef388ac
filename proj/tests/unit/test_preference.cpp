#include <map>
#include <set>

#include <gtest/gtest.h>

#include "octopus/errors.hpp"
#include "octopus/preference.hpp"

namespace octopus {
namespace {

Dataset describe_set(std::size_t n, std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.n_describe = n;
  return gen_dataset(cfg, seed);
}

Rollout scored(double score, std::uint64_t id = 0) {
  Rollout r;
  r.sample_id = id;
  r.score = score;
  r.workflow = {Action::kNull};
  r.result.response = {tok::kBos, tok::kEos};
  return r;
}

TEST(SampleRollouts, CountDeterminismAndShape) {
  const SimLvlm model;
  const Sample s = describe_set(1, 1)[0];
  const Rng rng(2, "rollout");
  const auto a = sample_rollouts(model, s, kDefaultRollouts, rng, CdConfig{});
  const auto b = sample_rollouts(model, s, kDefaultRollouts, rng, CdConfig{});
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].workflow, b[i].workflow);
    EXPECT_EQ(a[i].result.response, b[i].result.response);
    EXPECT_EQ(a[i].workflow.size(), a[i].result.steps());
    EXPECT_EQ(a[i].sample_id, s.sample_id);
  }
}

TEST(SampleRollouts, ActionsAreUniform) {
  const SimLvlm model;
  std::array<std::size_t, 4> counts{};
  std::size_t total = 0;
  const Rng root(3, "rollout");
  for (const Sample& s : describe_set(30, 3)) {
    for (const Rollout& r : sample_rollouts(model, s, 10, root.derive(s.sample_id), CdConfig{})) {
      for (Action a : r.workflow) ++counts[action_index(a)];
      total += r.workflow.size();
    }
  }
  ASSERT_GE(total, 1000u);
  for (std::size_t c : counts) EXPECT_NEAR(static_cast<double>(c) / total, 0.25, 0.05);
}

TEST(Criterion, ValuesAndNames) {
  ResponseScore perfect;
  perfect.chair = 0.0;
  perfect.cover = 1.0;
  EXPECT_EQ(criterion_value(perfect, Criterion::kChair), 0.0);
  EXPECT_EQ(criterion_value(perfect, Criterion::kCover), 1.0);
  EXPECT_EQ(criterion_value(perfect, Criterion::kAverage), 1.0);
  ResponseScore half;
  half.chair = 0.5;
  half.cover = 0.5;
  EXPECT_EQ(criterion_value(half, Criterion::kAverage), 0.5);
  EXPECT_EQ(criterion_from_name("cover"), Criterion::kCover);
  EXPECT_THROW(criterion_from_name("f1"), std::invalid_argument);
  EXPECT_TRUE(strictly_better(0.1, 0.2, Criterion::kChair));
  EXPECT_TRUE(strictly_better(0.2, 0.1, Criterion::kCover));
  EXPECT_FALSE(strictly_better(0.2, 0.2, Criterion::kAverage));
}

TEST(ScoreRollout, AllHallucinatedIsChairOne) {
  const SimLvlm model;
  const Scene s = make_scene(0, 1, {0, 1, 2}, 3, Cause::kNone);
  Rollout r;
  r.result.response = {tok::kBos, tok::kA, 5, tok::kA, 9, tok::kEos};
  EXPECT_EQ(score_rollout(r, s, model.prior(), Criterion::kChair), 1.0);
  EXPECT_EQ(score_rollout(r, s, model.prior(), Criterion::kCover), 0.0);
  r.result.response = {tok::kBos, tok::kA, 0, tok::kA, 1, tok::kA, 2, tok::kEos};
  EXPECT_EQ(score_rollout(r, s, model.prior(), Criterion::kChair), 0.0);
  EXPECT_EQ(score_rollout(r, s, model.prior(), Criterion::kAverage), 1.0);
}

TEST(BuildPairGenerative, TiesEmitNothing) {
  const std::vector<Rollout> same = {scored(0.3), scored(0.3), scored(0.3)};
  EXPECT_FALSE(build_pair_generative(same, Criterion::kChair).has_value());
  EXPECT_FALSE(build_pair_generative({scored(0.3)}, Criterion::kChair).has_value());
}

TEST(BuildPairGenerative, Orientation) {
  std::vector<Rollout> r = {scored(0.5), scored(0.1), scored(0.9)};
  r[1].workflow = {Action::kS1};
  r[2].workflow = {Action::kS2};
  const auto chair = build_pair_generative(r, Criterion::kChair);
  ASSERT_TRUE(chair);
  EXPECT_EQ(chair->score_pos, 0.1);
  EXPECT_EQ(chair->score_neg, 0.9);
  EXPECT_EQ(chair->pos.actions, Workflow{Action::kS1});
  const auto cover = build_pair_generative(r, Criterion::kCover);
  ASSERT_TRUE(cover);
  EXPECT_EQ(cover->pos.actions, Workflow{Action::kS2});
  EXPECT_EQ(cover->neg.actions, Workflow{Action::kS1});
}

TEST(BuildPairGenerative, FirstRolloutWinsTies) {
  std::vector<Rollout> r = {scored(0.2), scored(0.2), scored(0.7), scored(0.7)};
  for (std::size_t i = 0; i < r.size(); ++i) r[i].workflow = {kAllActions[i]};
  const auto p = build_pair_generative(r, Criterion::kChair);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->pos.actions, Workflow{Action::kNull});
  EXPECT_EQ(p->neg.actions, Workflow{Action::kS2});
}

TEST(BuildPairsGenerative, GroupsBySampleInOrder) {
  const std::vector<Rollout> r = {scored(0.1, 7), scored(0.4, 3), scored(0.6, 7), scored(0.4, 3)};
  const auto pairs = build_pairs_generative(r, Criterion::kChair);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].sample_id, 7u);
}

TEST(BuildPairGenerative, BestRolloutMatchesBruteForce) {
  // max_len 4 caps every decode at three steps, so 4^3 workflows cover all.
  ModelConfig mc;
  mc.max_len = 4;
  const SimLvlm model(mc);
  const CdConfig cd;
  const Rng root(5, "rollout");
  int checked = 0;
  for (const Sample& s : describe_set(150, 5)) {
    std::map<Workflow, double> score_of;
    double best = 2.0;
    for (int code = 0; code < 64; ++code) {
      const Workflow w = {kAllActions[code % 4], kAllActions[(code / 4) % 4],
                          kAllActions[code / 16]};
      const DecodeResult r = run_workflow(model, s, w, cd);
      ASSERT_LE(r.response.size(), 4u);  // <bos> plus at most three tokens
      const double c = score_response(r.response, s.scene, model.prior()).chair;
      score_of[Workflow(w.begin(), w.begin() + static_cast<long>(r.steps()))] = c;
      best = std::min(best, c);
    }
    auto rollouts = sample_rollouts(model, s, 10, root.derive(s.sample_id), cd);
    bool optimum_drawn = false;
    for (Rollout& r : rollouts) {
      r.score = score_rollout(r, s.scene, model.prior(), Criterion::kChair);
      ASSERT_EQ(r.score, score_of.at(r.workflow));
      optimum_drawn |= r.score == best;
    }
    const auto p = build_pair_generative(rollouts, Criterion::kChair);
    if (!p || !optimum_drawn) continue;
    EXPECT_EQ(score_of.at(p->pos.actions), best);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(BuildPairDiscriminative, RulesOnNaturalSamples) {
  const SimLvlm model;
  const CdConfig cd;
  DatasetConfig cfg;
  cfg.n_exists = 400;
  int none_correct = 0, one_correct = 0;
  for (const Sample& s : gen_dataset(cfg, 6)) {
    const TokenId gold = *s.gold_yes ? tok::kYes : tok::kNo;
    std::vector<Action> correct;
    for (Action a : kAllActions) {
      if (run_workflow(model, s, Workflow{a}, cd).response[0] == gold) correct.push_back(a);
    }
    const auto p = build_pair_discriminative(model, s, cd);
    if (correct.empty()) {
      EXPECT_FALSE(p.has_value());
      ++none_correct;
      continue;
    }
    ASSERT_TRUE(p.has_value());
    EXPECT_GT(p->score_pos, p->score_neg);
    EXPECT_EQ(p->pos.tokens[0], gold);
    if (correct.size() == 1) {
      EXPECT_EQ(p->pos.actions, Workflow{correct[0]});
      EXPECT_NE(p->neg.tokens[0], gold);
      ++one_correct;
    }
  }
  EXPECT_GT(none_correct, 0);
  EXPECT_GT(one_correct, 0);
}

TEST(BuildPairDiscriminative, BlindTokenStrategyWinsOnAttentionBias) {
  const SimLvlm model;
  DatasetConfig cfg;
  cfg.n_describe = 200;
  cfg.cause_mix = {0, 0, 1, 0};
  int s3 = 0;
  for (const Sample& d : gen_dataset(cfg, 7)) {
    Sample s = d;
    s.task = Task::kExists;
    s.queried = s.scene.blind_object;
    s.gold_yes = false;
    s.query_tokens = exists_prompt(s.queried);
    const auto p = build_pair_discriminative(model, s, CdConfig{});
    s3 += p && p->pos.actions == Workflow{Action::kS3};
  }
  EXPECT_GE(s3, 160);
}

TEST(BuildPairDiscriminative, RejectsDescribe) {
  const SimLvlm model;
  EXPECT_THROW(build_pair_discriminative(model, describe_set(1, 8)[0], CdConfig{}),
               std::invalid_argument);
}

TEST(GenerativePairs, StrictOrderingReplayAndDeterminism) {
  const SimLvlm model;
  const CdConfig cd;
  const Dataset ds = describe_set(60, 9);
  for (Criterion c : {Criterion::kChair, Criterion::kCover, Criterion::kAverage}) {
    const auto pairs = generative_pairs(model, ds, c, 10, 11, cd);
    ASSERT_FALSE(pairs.empty());
    const auto again = generative_pairs(model, ds, c, 10, 11, cd);
    ASSERT_EQ(pairs.size(), again.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const PreferencePair& p = pairs[i];
      EXPECT_TRUE(strictly_better(p.score_pos, p.score_neg, c));
      EXPECT_EQ(p.pos, again[i].pos);
      EXPECT_EQ(p.neg, again[i].neg);
      const Sample& s = ds[p.sample_id];
      EXPECT_EQ(replay(model, s, p.pos, cd).response, p.pos.tokens);
      EXPECT_EQ(replay(model, s, p.neg, cd).response, p.neg.tokens);
    }
  }
  EXPECT_EQ(generative_pairs(model, ds, Criterion::kChair, 10, 11, cd, 5).size(), 5u);
}

TEST(GenerativePairs, MatchesDatasetRollouts) {
  const SimLvlm model;
  const Dataset ds = describe_set(20, 10);
  const auto rollouts = dataset_rollouts(model, ds, 10, 12, Criterion::kChair, CdConfig{});
  EXPECT_EQ(rollouts.size(), 200u);
  const auto a = build_pairs_generative(rollouts, Criterion::kChair);
  const auto b = generative_pairs(model, ds, Criterion::kChair, 10, 12, CdConfig{});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pos, b[i].pos);
    EXPECT_EQ(a[i].neg, b[i].neg);
  }
}

TEST(Replay, DetectsTampering) {
  const SimLvlm model;
  const Sample s = describe_set(1, 13)[0];
  const DecodeResult r = run_workflow(model, s, null_workflow(16), CdConfig{});
  PairSide side{r.actions, r.response};
  EXPECT_NO_THROW(replay(model, s, side, CdConfig{}));
  PairSide bad = side;
  bad.tokens[2] = (bad.tokens[2] + 1) % kNumObjects;
  EXPECT_THROW(replay(model, s, bad, CdConfig{}), DataIntegrityError);
  PairSide short_side = side;
  short_side.actions.pop_back();
  EXPECT_THROW(replay(model, s, short_side, CdConfig{}), DataIntegrityError);
}

}  // namespace
}  // namespace octopus
