#pragma once

#include <array>
#include <string_view>

namespace octopus {

/// The per-step contrastive decoding choice. Null applies no contrast; S1..S3
/// contrast against the noise-image, query-masked and blind-token streams.
enum class Action : int { kNull = 0, kS1 = 1, kS2 = 2, kS3 = 3 };

inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions = {Action::kNull, Action::kS1,
                                                                Action::kS2, Action::kS3};

std::string_view action_name(Action a);
/// Accepts "null", "s1", "s2", "s3".
Action action_from_name(std::string_view name);

inline constexpr int action_index(Action a) { return static_cast<int>(a); }

}  // namespace octopus
