#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace rdpkit {

/// Seeded random source. Copying an Rng clones its stream.
///
/// Draws are built from raw 64-bit engine output rather than the standard
/// distributions, so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t index(std::uint64_t n);

  /// Draws an index from unnormalized nonnegative weights summing to `total`.
  std::size_t categorical(std::span<const double> weights, double total = 1.0);

  std::uint64_t next_u64() { return engine_(); }

  /// Independent stream for `name`, derived from the construction seed.
  Rng stream(std::string_view name) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Splits one run seed into named, independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

}  // namespace rdpkit
