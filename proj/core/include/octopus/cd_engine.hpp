#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "octopus/action.hpp"
#include "octopus/sim_lvlm.hpp"

namespace octopus {

class HeadParams;

/// l_cd = m * base - n * distorted with m = 1 + alpha, n = alpha.
struct CdConfig {
  double alpha = 1.0;

  double m() const { return 1.0 + alpha; }
  double n() const { return alpha; }
};

using Workflow = std::vector<Action>;

RealVector contrast(std::span<const double> base, std::span<const double> distorted,
                    const CdConfig& cfg);

/// The logits an action decodes from: base for Null, else the contrast.
RealVector decoding_logits(const LogitBundle& bundle, Action action, const CdConfig& cfg);

struct StepResult {
  TokenId token = -1;
  double margin = 0.0;      // top-1 minus top-2 decoding logit
  double confidence = 0.0;  // softmax probability of the emitted token
};

/// Greedy pick; ties go to the lowest token index.
StepResult decode_step(const SimLvlm& model, const Sample& sample,
                       std::span<const TokenId> history, Action action, const CdConfig& cfg);

struct DecodeResult {
  /// Describe responses start with <bos>; Exists responses are one token.
  std::vector<TokenId> response;
  Workflow actions;
  /// Final hidden sequence. The snapshot before step t is its first
  /// snapshot_rows[t] rows (appending never rewrites earlier rows).
  HiddenSeq hidden;
  std::vector<std::size_t> snapshot_rows;
  RealVector margins;
  RealVector confidences;

  std::size_t steps() const { return actions.size(); }
  Matrix snapshot(std::size_t step) const { return hidden.states.top_rows(snapshot_rows.at(step)); }
  /// Generated tokens in decode order (the response without <bos>).
  std::vector<TokenId> generated() const;
};

/// Chooses the action for `step` given the hidden states seen so far.
using ActionChooser = std::function<Action(std::size_t step, const HiddenSeq& current)>;

DecodeResult decode(const SimLvlm& model, const Sample& sample, const CdConfig& cfg,
                    const ActionChooser& choose);

/// Applies workflow[t] at step t. Throws std::invalid_argument when the
/// decode outlives the workflow; callers pad with Null.
DecodeResult run_workflow(const SimLvlm& model, const Sample& sample, const Workflow& workflow,
                          const CdConfig& cfg);

/// Runs the head on H_t at every step and applies its argmax action.
std::pair<DecodeResult, Workflow> decode_with_policy(const SimLvlm& model, const Sample& sample,
                                                     const HeadParams& head,
                                                     const CdConfig& cfg);

/// Workflow of `length` Null actions.
Workflow null_workflow(std::size_t length);

}  // namespace octopus
