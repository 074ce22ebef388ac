#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "octopus/head.hpp"
#include "octopus/preference.hpp"

namespace octopus {

struct TrainConfig {
  double beta = 1.0;
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;  // <= 0 disables clipping

  void validate() const;
};

/// A pair side with the hidden snapshot H_t the head saw before each step.
struct ReplayedSide {
  Workflow actions;
  std::vector<Matrix> snapshots;
};

ReplayedSide replay_side(const SimLvlm& model, const Sample& sample, const PairSide& side,
                         const CdConfig& cfg);

struct TrainingPair {
  std::uint64_t sample_id = 0;
  ReplayedSide pos;
  ReplayedSide neg;
};

/// Replays both sides of every pair against its sample. Throws
/// DataIntegrityError for unknown sample ids or replay divergence.
std::vector<TrainingPair> prepare_pairs(const SimLvlm& model, const Dataset& dataset,
                                        const std::vector<PreferencePair>& pairs,
                                        const CdConfig& cfg);

/// sum_t log softmax(head(H_t))[a_t]; 0 for an empty workflow.
double workflow_logprob(const HeadParams& head, const ReplayedSide& side);

/// Returns the log-probability and adds scale * its gradient into `grad`.
double workflow_logprob_grad(const HeadParams& head, const ReplayedSide& side, double scale,
                             std::span<double> grad);

/// -log sigmoid(beta * (logp_pos - logp_neg)) in softplus form.
double dpo_loss(double logp_pos, double logp_neg, double beta);

/// Loss of one pair; adds scale * d loss / d params into `grad`. The two
/// sides are differentiated separately, so a pair with identical sides
/// contributes an exactly zero gradient.
double dpo_loss_grad(const HeadParams& head, const TrainingPair& pair, double beta,
                     double scale, std::span<double> grad);

struct LossReport {
  std::vector<double> step_loss;       // mean batch loss before each update
  std::vector<double> grad_norm;       // batch gradient norm before clipping
  std::vector<double> epoch_loss;      // mean step loss per epoch
  std::vector<double> epoch_accuracy;  // preference accuracy after each epoch
};

/// Fraction of pairs with logp(A+) > logp(A-).
double preference_accuracy(const HeadParams& head, const std::vector<TrainingPair>& pairs);

/// Mini-batch Adam on the mean pair loss. Pair order is reshuffled every
/// epoch from the seed. Throws std::invalid_argument on an empty set.
LossReport train(HeadParams& head, const std::vector<TrainingPair>& pairs,
                 const TrainConfig& cfg);

/// Analytic pair-loss gradient against central differences on every
/// parameter coordinate.
GradCheckResult grad_check(const HeadParams& head, const TrainingPair& pair, double beta,
                           double h = 1e-5);

}  // namespace octopus
