#include "episodica/rng.hpp"

#include <cmath>
#include <numbers>

namespace episodica {

Rng::Rng(std::initializer_list<std::uint64_t> coords) noexcept : key_(0x6a09e667f3bcc908ULL) {
  for (auto c : coords) key_ = mix64(key_ ^ mix64(c));
}

Rng Rng::split(std::uint64_t id) const noexcept { return Rng(mix64(key_ ^ mix64(id ^ 0x5851f42d4c957f2dULL)), 0); }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // rejection sampling on the top of the range
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace episodica
