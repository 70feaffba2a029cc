#pragma once

#include <cstdint>
#include <initializer_list>

namespace episodica {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream. The stream key is derived from an arbitrary tuple
// of integers (seed, epoch, batch, image, transform...), so any draw is a pure
// function of its coordinates and independent of thread scheduling.
// Distributions are implemented here rather than via <random> so results
// are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : key_(mix64(seed)) {}
  Rng(std::initializer_list<std::uint64_t> coords) noexcept;

  /// Child stream keyed by this stream's key and `id`.
  Rng split(std::uint64_t id) const noexcept;

  std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(++counter_)); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Standard normal via Box-Muller.
  double normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }

 private:
  Rng(std::uint64_t key, int) noexcept : key_(key) {}
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace episodica
