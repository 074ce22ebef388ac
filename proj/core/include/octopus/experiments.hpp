#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "octopus/cd_engine.hpp"
#include "octopus/head.hpp"
#include "octopus/io.hpp"
#include "octopus/metrics.hpp"

namespace octopus {

enum class PolicyKind { kBase, kFixed, kRandom, kOctopus };

/// How actions are chosen during evaluation.
///   base     all Null
///   fixed    one strategy at every step
///   random   a uniform draw from {S1, S2, S3} at every step
///   octopus  the head's argmax action at every step
struct Policy {
  PolicyKind kind = PolicyKind::kBase;
  Action fixed = Action::kNull;
  std::uint64_t seed = 0;
  const HeadParams* head = nullptr;

  static Policy base() { return {}; }
  static Policy fixed_action(Action a) { return {PolicyKind::kFixed, a, 0, nullptr}; }
  static Policy random(std::uint64_t seed) { return {PolicyKind::kRandom, Action::kNull, seed, nullptr}; }
  static Policy octopus(const HeadParams& head) { return {PolicyKind::kOctopus, Action::kNull, 0, &head}; }

  std::string label() const;
};

DecodeResult decode_policy(const SimLvlm& model, const Sample& sample, const Policy& policy,
                           const CdConfig& cfg);

using ActionCounts = std::array<std::size_t, kNumActions>;

struct GenEval {
  GenMetrics metrics;
  std::vector<std::vector<TokenId>> responses;
  std::vector<Workflow> workflows;
  ActionCounts action_counts{};
};

/// Decodes every Describe sample. Throws std::invalid_argument if there are none.
GenEval eval_generative(const SimLvlm& model, const Dataset& dataset, const Policy& policy,
                        const CdConfig& cfg);

struct DiscEval {
  DiscMetrics metrics;
  std::vector<bool> predicted_yes;
  ActionCounts action_counts{};
};

/// Answers every Exists sample. Throws std::invalid_argument if there are none.
DiscEval eval_discriminative(const SimLvlm& model, const Dataset& dataset, const Policy& policy,
                             const CdConfig& cfg);

/// How many fixed strategies strictly improve a sample's CHAIR over base.
struct OverlapReport {
  std::size_t samples = 0;
  std::array<std::size_t, 4> counts{};  // none, exactly one, exactly two, all three
  std::array<double, 4> fractions{};
  std::array<std::size_t, 3> effective_by_strategy{};  // S1, S2, S3
};

OverlapReport analyze_overlap(const SimLvlm& model, const Dataset& dataset, const CdConfig& cfg);

struct FamilyResult {
  std::string name;
  std::vector<Action> actions;  // empty for base
  double chair = 0.0;  // mean per-sample CHAIR of the chosen responses
  double hal = 0.0;    // fraction of chosen responses with a hallucination
  double cog = 0.0;    // mean per-sample prior-consistent hallucination rate
};

struct EnumerateReport {
  std::size_t prefix_len = 0;
  std::size_t samples = 0;
  std::size_t samples_with_targets = 0;
  std::vector<FamilyResult> families;  // base, singles, pairs, all three

  const FamilyResult& family(const std::string& name) const;
};

inline constexpr std::size_t kMaxPrefixLen = 4;

/// Token-level enumeration. Decoding runs with Null until the Null choice
/// would emit an absent object; the first `prefix_len` such steps take the
/// strategy assigned to them instead. Every assignment from a family's
/// strategy set is tried and the per-sample best response is kept by
/// (CHAIR, hallucinated, prior rate). Samples whose base decode is clean
/// keep the base response. Throws std::invalid_argument when prefix_len is
/// 0 or above kMaxPrefixLen.
EnumerateReport analyze_enumerate(const SimLvlm& model, const Dataset& dataset,
                                  const CdConfig& cfg, std::size_t prefix_len);

/// Steps (indices into the decode) at which `result` emitted an object
/// absent from the scene, first `limit` only.
std::vector<std::size_t> hallucination_steps(const DecodeResult& result, const Scene& scene,
                                             std::size_t limit);

Json gen_metrics_json(const GenMetrics& m);
Json disc_metrics_json(const DiscMetrics& m);
Json action_counts_json(const ActionCounts& c);
Json overlap_json(const OverlapReport& r);
Json enumerate_json(const EnumerateReport& r);

/// Header and one data row, comma separated, newline terminated.
std::string gen_csv(const std::string& policy, const GenMetrics& m);
std::string disc_csv(const std::string& policy, const DiscMetrics& m);
std::string overlap_csv(const OverlapReport& r);
std::string enumerate_csv(const EnumerateReport& r);

}  // namespace octopus
