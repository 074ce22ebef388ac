#pragma once

#include <stdexcept>
#include <string>

namespace octopus {

// Invalid arguments use std::invalid_argument directly.

/// Internal-state violation, e.g. decoding past the maximum response length.
class InvalidStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an API contract (stale trace, Null action asked for a stream).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Stored artifacts disagree with what they claim to be: fingerprint
/// mismatches, replay divergence, inconsistent files.
class DataIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint or data file could not be loaded.
class LoadError : public std::runtime_error {
 public:
  enum class Kind { kIo, kMalformed, kVersionMismatch, kShapeMismatch };

  LoadError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace octopus
