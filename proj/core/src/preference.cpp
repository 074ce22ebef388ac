#include "octopus/preference.hpp"

#include <map>
#include <stdexcept>
#include <string>

#include "octopus/errors.hpp"

namespace octopus {

std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::kChair: return "chair";
    case Criterion::kCover: return "cover";
    case Criterion::kAverage: return "average";
  }
  throw std::invalid_argument("criterion_name: bad criterion");
}

Criterion criterion_from_name(std::string_view name) {
  for (Criterion c : {Criterion::kChair, Criterion::kCover, Criterion::kAverage}) {
    if (criterion_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown criterion '" + std::string(name) +
                              "' (expected chair, cover or average)");
}

double criterion_value(const ResponseScore& score, Criterion c) {
  switch (c) {
    case Criterion::kChair: return score.chair;
    case Criterion::kCover: return score.cover;
    case Criterion::kAverage: return 0.5 * (score.cover + (1.0 - score.chair));
  }
  throw std::invalid_argument("criterion_value: bad criterion");
}

bool strictly_better(double a, double b, Criterion c) {
  return c == Criterion::kChair ? a < b : a > b;
}

std::vector<Rollout> sample_rollouts(const SimLvlm& model, const Sample& sample,
                                     std::size_t count, const Rng& rng, const CdConfig& cfg) {
  std::vector<Rollout> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng r = rng.derive(i);
    Rollout ro;
    ro.sample_id = sample.sample_id;
    ro.result = decode(model, sample, cfg, [&](std::size_t, const HiddenSeq&) {
      return kAllActions[r.below(kNumActions)];
    });
    ro.workflow = ro.result.actions;
    out.push_back(std::move(ro));
  }
  return out;
}

double score_rollout(const Rollout& rollout, const Scene& scene, const CooccurrencePrior& prior,
                     Criterion criterion) {
  return criterion_value(score_response(rollout.result.response, scene, prior), criterion);
}

std::optional<PreferencePair> build_pair_generative(const std::vector<Rollout>& rollouts,
                                                    Criterion criterion) {
  if (rollouts.size() < 2) return std::nullopt;
  std::size_t best = 0;
  std::size_t worst = 0;
  for (std::size_t i = 1; i < rollouts.size(); ++i) {
    if (strictly_better(rollouts[i].score, rollouts[best].score, criterion)) best = i;
    if (strictly_better(rollouts[worst].score, rollouts[i].score, criterion)) worst = i;
  }
  if (!strictly_better(rollouts[best].score, rollouts[worst].score, criterion)) {
    return std::nullopt;
  }
  PreferencePair p;
  p.sample_id = rollouts[best].sample_id;
  p.pos = {rollouts[best].workflow, rollouts[best].result.response};
  p.neg = {rollouts[worst].workflow, rollouts[worst].result.response};
  p.score_pos = rollouts[best].score;
  p.score_neg = rollouts[worst].score;
  return p;
}

std::vector<PreferencePair> build_pairs_generative(const std::vector<Rollout>& rollouts,
                                                   Criterion criterion) {
  std::vector<std::uint64_t> order;
  std::map<std::uint64_t, std::vector<Rollout>> groups;
  for (const Rollout& r : rollouts) {
    auto [it, inserted] = groups.try_emplace(r.sample_id);
    if (inserted) order.push_back(r.sample_id);
    it->second.push_back(r);
  }
  std::vector<PreferencePair> out;
  for (std::uint64_t id : order) {
    if (auto p = build_pair_generative(groups[id], criterion)) out.push_back(std::move(*p));
  }
  return out;
}

std::optional<PreferencePair> build_pair_discriminative(const SimLvlm& model,
                                                        const Sample& sample,
                                                        const CdConfig& cfg) {
  if (sample.task != Task::kExists || !sample.gold_yes) {
    throw std::invalid_argument("build_pair_discriminative: needs a labelled Exists sample");
  }
  const TokenId gold = *sample.gold_yes ? tok::kYes : tok::kNo;
  std::optional<std::size_t> best_ok, worst_ok, worst_bad;
  std::array<DecodeResult, kNumActions> runs;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    runs[a] = run_workflow(model, sample, Workflow{kAllActions[a]}, cfg);
    const double conf = runs[a].confidences.front();
    if (runs[a].response.front() == gold) {
      if (!best_ok || conf > runs[*best_ok].confidences.front()) best_ok = a;
      if (!worst_ok || conf < runs[*worst_ok].confidences.front()) worst_ok = a;
    } else if (!worst_bad || conf < runs[*worst_bad].confidences.front()) {
      worst_bad = a;
    }
  }
  if (!best_ok) return std::nullopt;
  const std::size_t neg = worst_bad ? *worst_bad : *worst_ok;
  auto signed_conf = [&](std::size_t a) {
    const double c = runs[a].confidences.front();
    return runs[a].response.front() == gold ? c : -c;
  };
  PreferencePair p;
  p.sample_id = sample.sample_id;
  p.pos = {runs[*best_ok].actions, runs[*best_ok].response};
  p.neg = {runs[neg].actions, runs[neg].response};
  p.score_pos = signed_conf(*best_ok);
  p.score_neg = signed_conf(neg);
  if (!(p.score_pos > p.score_neg)) return std::nullopt;
  return p;
}

DecodeResult replay(const SimLvlm& model, const Sample& sample, const PairSide& side,
                    const CdConfig& cfg) {
  DecodeResult r;
  try {
    r = run_workflow(model, sample, side.actions, cfg);
  } catch (const std::invalid_argument&) {
    throw DataIntegrityError("replay of sample " + std::to_string(sample.sample_id) +
                             ": decode outlived the stored workflow");
  }
  if (r.response != side.tokens || r.actions.size() != side.actions.size()) {
    throw DataIntegrityError("replay of sample " + std::to_string(sample.sample_id) +
                             " produced different tokens than stored");
  }
  return r;
}

std::vector<Rollout> dataset_rollouts(const SimLvlm& model, const Dataset& dataset,
                                      std::size_t count, std::uint64_t seed, Criterion criterion,
                                      const CdConfig& cfg) {
  const Rng root(seed, "rollout");
  std::vector<Rollout> out;
  for (const Sample& s : dataset) {
    if (s.task != Task::kDescribe) continue;
    for (Rollout& r : sample_rollouts(model, s, count, root.derive(s.sample_id), cfg)) {
      r.criterion = criterion;
      r.score = score_rollout(r, s.scene, model.prior(), criterion);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<PreferencePair> generative_pairs(const SimLvlm& model, const Dataset& dataset,
                                             Criterion criterion, std::size_t count,
                                             std::uint64_t seed, const CdConfig& cfg,
                                             std::size_t max_pairs) {
  const Rng root(seed, "rollout");
  std::vector<PreferencePair> out;
  for (const Sample& s : dataset) {
    if (s.task != Task::kDescribe) continue;
    if (max_pairs != 0 && out.size() >= max_pairs) break;
    std::vector<Rollout> rollouts = sample_rollouts(model, s, count, root.derive(s.sample_id), cfg);
    for (Rollout& r : rollouts) {
      r.criterion = criterion;
      r.score = score_rollout(r, s.scene, model.prior(), criterion);
    }
    if (auto p = build_pair_generative(rollouts, criterion)) out.push_back(std::move(*p));
  }
  return out;
}

std::vector<PreferencePair> discriminative_pairs(const SimLvlm& model, const Dataset& dataset,
                                                 const CdConfig& cfg, std::size_t max_pairs) {
  std::vector<PreferencePair> out;
  for (const Sample& s : dataset) {
    if (s.task != Task::kExists) continue;
    if (max_pairs != 0 && out.size() >= max_pairs) break;
    if (auto p = build_pair_discriminative(model, s, cfg)) out.push_back(std::move(*p));
  }
  return out;
}

}  // namespace octopus
