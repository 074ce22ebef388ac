#pragma once

#include <cstdint>
#include <string_view>

#include "octopus/tensor.hpp"

namespace octopus {

/// 64-bit FNV-1a; used for stream labels and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based generator. Output i of a stream is mix64(key + i * golden),
/// so the sequence depends only on (seed, label, derivation path) and is
/// bit-identical across platforms for the integer and uniform draws.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view label);

  /// Independent child stream, e.g. one per sample or per step.
  Rng derive(std::uint64_t index) const;
  Rng derive(std::string_view label) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal();

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// n i.i.d. N(0, sigma^2) draws.
RealVector gaussian(Rng& rng, std::size_t n, double sigma);

}  // namespace octopus
