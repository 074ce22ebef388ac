#pragma once

#include <span>
#include <vector>

#include "octopus/world.hpp"

namespace octopus {

struct Mentions {
  std::vector<TokenId> multiset;  // in response order
  std::vector<TokenId> set;       // sorted, deduplicated
};

/// Object tokens in a response. Throws std::invalid_argument on tokens
/// outside the vocabulary.
Mentions parse_mentions(std::span<const TokenId> tokens);

struct GenCounts {
  std::size_t responses = 0;
  std::size_t hallucinated_responses = 0;
  std::size_t mentions = 0;
  std::size_t hallucinated_mentions = 0;
  std::size_t prior_hallucinated_mentions = 0;
};

struct GenMetrics {
  double chair_s = 0.0;
  double chair_i = 0.0;
  double cover = 0.0;
  double hal = 0.0;
  double cog = 0.0;
  GenCounts counts;
};

/// Per-response view used for rollout scoring.
struct ResponseScore {
  double chair = 0.0;  // hallucinated / all mentions of this response, 0 if none
  double cover = 0.0;
  bool hallucinated = false;
  std::size_t mentions = 0;
  std::size_t hallucinated_mentions = 0;
  std::size_t prior_hallucinated_mentions = 0;
};

ResponseScore score_response(std::span<const TokenId> tokens, const Scene& scene,
                             const CooccurrencePrior& prior);

/// Mentions are counted with multiplicity (CHAIR_i is pooled over the
/// dataset); cover uses the deduplicated set. Throws std::invalid_argument
/// on empty or mismatched inputs.
GenMetrics gen_metrics(std::span<const std::vector<TokenId>> responses,
                       std::span<const Scene> scenes, const CooccurrencePrior& prior);

struct DiscCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct DiscMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  DiscCounts counts;
};

/// "yes" is the positive class.
DiscMetrics disc_metrics(const std::vector<bool>& predicted_yes, const std::vector<bool>& gold_yes);

}  // namespace octopus
