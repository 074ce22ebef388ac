#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octopus/cd_engine.hpp"
#include "octopus/preference.hpp"
#include "octopus/world.hpp"

namespace octopus {

using Json = nlohmann::json;

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

/// FNV-1a of the bytes, as hex64.
std::string content_fingerprint(const std::string& bytes);

Json model_config_json(const ModelConfig& model, const CdConfig& cd);
/// Identifies everything that shapes decoding: the model config and alpha.
std::string model_fingerprint(const ModelConfig& model, const CdConfig& cd);

/// Throws DataIntegrityError naming `what` when the two differ.
void check_fingerprint(const std::string& expected, const std::string& actual,
                       const std::string& what);

/// Reads a whole file; LoadError(kIo) when it cannot be opened.
std::string read_file(const std::string& path);
/// Writes to a temporary sibling and renames it over `path`.
/// Throws std::runtime_error on failure.
void write_file_atomic(const std::string& path, const std::string& contents);

/// One JSON object per line, keys sorted, objects by name.
Json sample_to_json(const Sample& sample);
/// Rebuilds the scene from its stored content. Throws DataIntegrityError on
/// malformed records or broken invariants.
Sample sample_from_json(const Json& j);

std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(const std::string& text);
Dataset load_dataset(const std::string& path);

/// First line of rollout and preference files.
struct ArtifactHeader {
  std::string format;  // "octopus-rollouts" or "octopus-prefs"
  int version = 1;
  std::string dataset;
  std::string dataset_fingerprint;
  std::string model_fingerprint;
  std::uint64_t seed = 0;
  std::string criterion;  // chair | cover | average | confidence
  std::string task;       // gen | disc
  std::size_t count = 0;  // rollouts per sample (rollout files)
};

Json header_to_json(const ArtifactHeader& h);
ArtifactHeader header_from_json(const Json& j, const std::string& expected_format);

struct RolloutRecord {
  std::uint64_t sample_id = 0;
  std::size_t index = 0;
  PairSide side;
  double chair = 0.0;
  double cover = 0.0;
};

struct RolloutFile {
  ArtifactHeader header;
  std::vector<RolloutRecord> records;
};

std::string rollouts_to_jsonl(const RolloutFile& file);
RolloutFile rollouts_from_jsonl(const std::string& text);

struct PrefFile {
  ArtifactHeader header;
  std::vector<PreferencePair> pairs;
};

std::string prefs_to_jsonl(const PrefFile& file);
PrefFile prefs_from_jsonl(const std::string& text);

}  // namespace octopus
