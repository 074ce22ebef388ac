#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "octopus/rng.hpp"
#include "octopus/tensor.hpp"

namespace octopus {

using TokenId = int;

inline constexpr int kNumObjects = 24;
inline constexpr int kVocabSize = 32;
inline constexpr int kNumClusters = 4;
inline constexpr int kClusterSize = 6;
inline constexpr std::size_t kImageTokens = 8;
inline constexpr std::size_t kFeatureDim = 32;

// Object nouns occupy [0, 24); function tokens follow.
namespace tok {
inline constexpr TokenId kBos = 24;
inline constexpr TokenId kEos = 25;
inline constexpr TokenId kA = 26;
inline constexpr TokenId kThe = 27;
inline constexpr TokenId kAnd = 28;
inline constexpr TokenId kYes = 29;
inline constexpr TokenId kNo = 30;
inline constexpr TokenId kPad = 31;
}  // namespace tok

struct Vocab {
  static constexpr std::size_t size() { return kVocabSize; }
  static constexpr bool is_object(TokenId t) { return t >= 0 && t < kNumObjects; }
  static constexpr bool is_valid(TokenId t) { return t >= 0 && t < kVocabSize; }
  static std::string_view name(TokenId t);
  /// Throws std::invalid_argument for unknown names.
  static TokenId id(std::string_view name);
};

// Feature layout of an image token (kFeatureDim = 32):
//   [0, 24)  object evidence, one image token per present object
//   24       blind channel (exactly one token)
//   25, 26   prior / visual strength channels, filled in by the encoder
//   27..29   segment flags: image, query, generated
//   30, 31   function-token code
namespace feat {
inline constexpr std::size_t kBlind = 24;
inline constexpr std::size_t kPriorStrength = 25;
inline constexpr std::size_t kVisualStrength = 26;
inline constexpr std::size_t kSegImage = 27;
inline constexpr std::size_t kSegQuery = 28;
inline constexpr std::size_t kSegGenerated = 29;
inline constexpr std::size_t kCode0 = 30;
inline constexpr std::size_t kCode1 = 31;
}  // namespace feat

/// Symmetric object co-occurrence prior with a 4 x 6 cluster structure.
struct CooccurrencePrior {
  Matrix p;                              // 24 x 24, zero diagonal
  std::array<int, kNumObjects> cluster{};
  std::array<double, kNumObjects> popularity{};  // generic mention frequency
  double within = 0.6;
  double cross = 0.05;

  /// Mean of P(o, s) over s in `context`; 0 for an empty context.
  double mean_with(TokenId o, std::span<const TokenId> context) const;
  /// Absent objects o with mean P(o, s) over the scene >= 0.3.
  std::vector<TokenId> prior_set(std::span<const TokenId> scene_objects) const;
  bool in_prior_set(TokenId o, std::span<const TokenId> scene_objects) const;
};

inline constexpr double kPriorSetThreshold = 0.3;

/// Cluster membership is a seeded permutation of the 24 objects. Within
/// each cluster the first member is popular (1.0) and the second half as
/// popular (0.5).
CooccurrencePrior gen_prior(std::uint64_t seed);

enum class Cause { kPrior, kVisLoss, kAttnBias, kNone };
inline constexpr std::array<Cause, 4> kAllCauses = {Cause::kPrior, Cause::kVisLoss,
                                                    Cause::kAttnBias, Cause::kNone};
std::string_view cause_name(Cause c);
Cause cause_from_name(std::string_view name);

/// Probability per cause in kAllCauses order.
using CauseMix = std::array<double, 4>;
inline constexpr CauseMix kDefaultCauseMix = {0.3, 0.3, 0.3, 0.1};

struct Scene {
  std::uint64_t id = 0;
  std::uint64_t feature_seed = 0;
  std::vector<TokenId> objects;  // generation order, 3..6 distinct
  TokenId blind_object = -1;
  Cause cause = Cause::kNone;
  Matrix features;  // kImageTokens x kFeatureDim

  bool contains(TokenId o) const;
  /// Visual evidence for object o: max over image tokens of its feature.
  double evidence(TokenId o) const;
  std::size_t blind_token() const;
};

/// Builds the visual features for the given content. Pure in its arguments,
/// which lets a dataset file reproduce the scene exactly.
Scene make_scene(std::uint64_t id, std::uint64_t feature_seed, std::vector<TokenId> objects,
                 TokenId blind_object, Cause cause);

Scene gen_scene(Rng& rng, const CooccurrencePrior& prior, const CauseMix& mix,
                std::uint64_t id);

enum class Task { kDescribe, kExists };

struct Sample {
  std::uint64_t sample_id = 0;
  Task task = Task::kDescribe;
  Scene scene;
  TokenId queried = -1;          // Exists only
  std::optional<bool> gold_yes;  // Exists only
  std::vector<TokenId> query_tokens;
};

/// Fixed prompt standing in for "describe this image in detail".
const std::vector<TokenId>& describe_prompt();
std::vector<TokenId> exists_prompt(TokenId queried);

struct DatasetConfig {
  std::size_t n_describe = 0;
  std::size_t n_exists = 0;
  CauseMix cause_mix = kDefaultCauseMix;
  std::uint64_t prior_seed = 7;
};

using Dataset = std::vector<Sample>;

/// Describe samples first (ids 0..n_describe-1), then Exists samples.
/// Exists labels alternate yes/no; "no" queries cycle through the blind
/// object, the most prior-consistent absent object, and a random absent one.
Dataset gen_dataset(const DatasetConfig& config, std::uint64_t seed);

void validate_cause_mix(const CauseMix& mix);

}  // namespace octopus
