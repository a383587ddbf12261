#include "attnforge/rng.hpp"

#include <cmath>
#include <numbers>

namespace attnforge {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(seed + kGolden) ^ mix64(stream * kGolden + 1)) {}

Rng Rng::split(std::uint64_t label) const {
  Rng child(0);
  child.key_ = mix64(key_ ^ mix64(label + 0x632BE59BD9B4E019ULL));
  return child;
}

Rng::result_type Rng::operator()() {
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_ + c * kGolden) ^ key_);
}

double Rng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double sigma, double bound) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound) return z * sigma;
  }
}

std::size_t Rng::below(std::size_t n) {
  // Rejection keeps the modulo unbiased.
  const std::uint64_t limit = max() - max() % n;
  for (;;) {
    const std::uint64_t r = (*this)();
    if (r < limit) return static_cast<std::size_t>(r % n);
  }
}

}  // namespace attnforge
