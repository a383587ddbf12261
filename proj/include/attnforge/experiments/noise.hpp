#pragma once

#include <cstdint>

#include "attnforge/tensor.hpp"

namespace attnforge {

inline constexpr double kMaxNoiseLevel = 0.40;

/// Noise level as a fraction of the mean embedding row norm, plus its seed.
struct NoiseSpec {
  double level = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless 0 <= level <= 0.40.
  void validate() const;
};

/// Mean L2 norm of the rows of a matrix.
template <typename T>
double mean_row_norm(const Tensor<T>& x);

/// Adds i.i.d. N(0, σ²) noise with σ = level·μ/√d, μ the mean row norm, so a
/// noise row has expected norm ≈ level·μ. level == 0 returns the input as is.
template <typename T>
Tensor<T> inject_noise(const Tensor<T>& embeddings, const NoiseSpec& spec);

}  // namespace attnforge
