#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>

namespace attnforge {

/// Counter-based generator: the n-th draw is a pure function of (key, n), and
/// split() derives statistically independent child streams from a label. Every
/// harness derives its randomness from one root seed this way.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Child stream identified by `label`; does not advance this generator.
  Rng split(std::uint64_t label) const;

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal (Box-Muller, one draw per call).
  double normal();
  /// Normal with standard deviation `sigma`, resampled outside ±bound·sigma.
  double truncated_normal(double sigma, double bound = 2.0);
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace attnforge
