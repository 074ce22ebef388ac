#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "octopus/cd_engine.hpp"
#include "octopus/metrics.hpp"
#include "octopus/rng.hpp"

namespace octopus {

/// chair: lower is better. cover, average: higher is better.
enum class Criterion { kChair, kCover, kAverage };

std::string_view criterion_name(Criterion c);
Criterion criterion_from_name(std::string_view name);

/// Value of a response under a criterion, in the criterion's own orientation.
double criterion_value(const ResponseScore& score, Criterion c);
/// True when `a` is strictly better than `b`.
bool strictly_better(double a, double b, Criterion c);

struct Rollout {
  std::uint64_t sample_id = 0;
  Workflow workflow;  // one action per decode step
  DecodeResult result;
  double score = 0.0;
  Criterion criterion = Criterion::kChair;
};

/// Default rollouts per sample.
inline constexpr std::size_t kDefaultRollouts = 10;

/// `count` decodes with a uniformly random action at every step. Rollout i
/// draws from rng.derive(i). Scores are left at 0; see score_rollout.
std::vector<Rollout> sample_rollouts(const SimLvlm& model, const Sample& sample,
                                     std::size_t count, const Rng& rng, const CdConfig& cfg);

double score_rollout(const Rollout& rollout, const Scene& scene, const CooccurrencePrior& prior,
                     Criterion criterion);

/// A stored workflow and the tokens it produced.
struct PairSide {
  Workflow actions;
  std::vector<TokenId> tokens;

  friend bool operator==(const PairSide&, const PairSide&) = default;
};

struct PreferencePair {
  std::uint64_t sample_id = 0;
  PairSide pos;
  PairSide neg;
  double score_pos = 0.0;
  double score_neg = 0.0;

  double gap() const { return score_pos - score_neg; }
};

/// Best rollout against worst for one sample (first rollout wins ties on
/// either end). No pair when every rollout scores the same. Rollouts must
/// already carry scores for `criterion`.
std::optional<PreferencePair> build_pair_generative(const std::vector<Rollout>& rollouts,
                                                    Criterion criterion);

/// Groups rollouts by sample id (in order of first appearance) and builds
/// one pair per group.
std::vector<PreferencePair> build_pairs_generative(const std::vector<Rollout>& rollouts,
                                                   Criterion criterion);

/// Decodes the one-token answer under every action. Scores are the answer
/// confidence, negated for wrong answers, so A+ always scores higher.
std::optional<PreferencePair> build_pair_discriminative(const SimLvlm& model,
                                                        const Sample& sample,
                                                        const CdConfig& cfg);

/// Re-decodes a stored side. Throws DataIntegrityError if the tokens differ.
DecodeResult replay(const SimLvlm& model, const Sample& sample, const PairSide& side,
                    const CdConfig& cfg);

/// Rollouts for every Describe sample, sample i drawing from
/// Rng(seed, "rollout").derive(sample_id), scored under `criterion`.
std::vector<Rollout> dataset_rollouts(const SimLvlm& model, const Dataset& dataset,
                                      std::size_t count, std::uint64_t seed, Criterion criterion,
                                      const CdConfig& cfg);

/// Pairs from the Describe samples in dataset order; stops after
/// `max_pairs` when it is nonzero.
std::vector<PreferencePair> generative_pairs(const SimLvlm& model, const Dataset& dataset,
                                             Criterion criterion, std::size_t count,
                                             std::uint64_t seed, const CdConfig& cfg,
                                             std::size_t max_pairs = 0);

/// Pairs from the Exists samples in dataset order.
std::vector<PreferencePair> discriminative_pairs(const SimLvlm& model, const Dataset& dataset,
                                                 const CdConfig& cfg, std::size_t max_pairs = 0);

}  // namespace octopus
