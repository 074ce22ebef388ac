#pragma once

#include <string>

#include "octopus/head.hpp"
#include "octopus/io.hpp"

namespace octopus {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  HeadParams params;
  /// Fingerprint of the model/cd configuration the head was trained against.
  std::string model_fingerprint;
};

Json head_config_json(const HeadConfig& config);
HeadConfig head_config_from_json(const Json& j);

/// {format_version, head_config, model_fingerprint,
///  parameters: [{name, shape, values}] in canonical order}
Json checkpoint_to_json(const HeadParams& params, const std::string& model_fingerprint);
/// Throws LoadError (kMalformed, kVersionMismatch or kShapeMismatch).
Checkpoint checkpoint_from_json(const Json& j);

void save_checkpoint(const HeadParams& params, const std::string& model_fingerprint,
                     const std::string& path);
/// Throws LoadError; kIo when the file cannot be read.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace octopus
