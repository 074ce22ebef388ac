#include "octopus/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace octopus {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(std::uint64_t seed, std::string_view label)
    : key_(mix64(mix64(seed + kGolden) ^ fnv1a64(label))) {}

Rng Rng::derive(std::uint64_t index) const {
  return Rng(mix64(key_ ^ mix64(index + 0x632BE59BD9B4E019ULL)));
}

Rng Rng::derive(std::string_view label) const {
  return Rng(mix64(key_ ^ fnv1a64(label)));
}

std::uint64_t Rng::next_u64() {
  return mix64(key_ + (++counter_) * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RealVector gaussian(Rng& rng, std::size_t n, double sigma) {
  if (n == 0) throw std::invalid_argument("gaussian: n must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian: sigma must be >= 0");
  RealVector out(n);
  for (double& x : out) x = sigma * rng.normal();
  return out;
}

}  // namespace octopus
