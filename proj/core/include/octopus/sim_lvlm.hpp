#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "octopus/action.hpp"
#include "octopus/tensor.hpp"
#include "octopus/world.hpp"

namespace octopus {

struct ComponentWeights {
  double v = 4.0;
  double l = 1.0;
  double b = 0.0;
};

/// Fixed configuration of the simulated vision-language model.
///
/// Logits are a weighted sum of four components: G (template grammar plus a
/// generic object-popularity term), V (visual evidence), L (co-occurrence
/// prior) and B (blind-token bias). Each hallucination cause corrupts one
/// weight. The three distorted streams are
///
///   S1 = G + r1 wV V + kappa wL L            (noise image)
///   S2 = G + r2 wV V + wL Lbar + wB Bbar     (query masked)
///   S3 = G + r3 wV V + wL L + kappa wB B     (blind-token image)
///
/// where r_s is the fraction of visual evidence the distortion keeps.
struct ModelConfig {
  std::size_t hidden_dim = kFeatureDim;
  ComponentWeights clean{};
  double prior_w_l = 18.0;   // cause Prior
  double visloss_w_v = 1.5;  // cause VisLoss
  double attn_w_b = 9.0;     // cause AttnBias
  double kappa = 2.0;
  double sigma_eta = 0.05;
  std::size_t max_len = 16;
  std::array<double, 3> v_retention = {1.0, 0.0, 1.0};
  double prior_scale = 2.5;
  double popularity_gain = 1.4;
  double eos_bias = 0.5;
  double eos_fatigue = 0.15;
  double yes_bias = 1.0;
  double exists_evidence_threshold = 0.5;
  double exists_prior_threshold = 0.3;
  std::uint64_t prior_seed = 7;
  std::uint64_t noise_seed = 11;

  ComponentWeights weights_for(Cause cause) const;
  /// Throws std::invalid_argument on negative weights or kappa <= 1.
  void validate() const;
};

inline constexpr double kDisallowedLogit = -20.0;

/// Hidden states for [image tokens][query tokens][generated tokens].
struct HiddenSeq {
  Matrix states;
  std::size_t image_len = 0;
  std::size_t query_len = 0;

  std::size_t size() const { return states.rows(); }
  std::size_t generated() const { return states.rows() - image_len - query_len; }
};

struct LogitComponents {
  RealVector g, v, l, b;
  RealVector l_bar, b_bar;  // query-marginal versions used by S2
  RealVector eta;           // base-stream noise
  std::array<RealVector, 3> eta_distorted;
};

struct LogitBundle {
  RealVector base;
  std::array<RealVector, 3> distorted;  // S1, S2, S3
  LogitComponents parts;
  ComponentWeights weights;
};

class SimLvlm {
 public:
  explicit SimLvlm(ModelConfig config = {});

  const ModelConfig& config() const noexcept { return config_; }
  const CooccurrencePrior& prior() const noexcept { return prior_; }

  /// Image and query states. Describe decoding appends <bos> itself.
  HiddenSeq encode(const Sample& sample) const;
  /// Adds the state of one generated token; earlier rows are untouched.
  void append(HiddenSeq& seq, TokenId token) const;
  RealVector token_state(TokenId token, bool generated) const;

  /// `history` holds the generated tokens so far: it starts with <bos> for
  /// Describe and is empty for Exists. Throws InvalidStateError when the
  /// history is too long or ungrammatical.
  LogitBundle base_logits(const Sample& sample, std::span<const TokenId> history) const;

 private:
  void describe_components(const Sample& sample, std::span<const TokenId> history,
                           LogitComponents& c) const;
  void exists_components(const Sample& sample, std::span<const TokenId> history,
                         LogitComponents& c) const;

  ModelConfig config_;
  CooccurrencePrior prior_;
};

/// The precomputed distorted stream for a strategy. Null has none and
/// raises ContractViolation.
const RealVector& distorted_stream(const LogitBundle& bundle, Action strategy);

/// max over absent-object logits minus max over present-object logits.
double hallucination_margin(std::span<const double> logits, const Scene& scene);

}  // namespace octopus
