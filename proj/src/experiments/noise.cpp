#include "attnforge/experiments/noise.hpp"

#include <cmath>
#include <string>

#include "attnforge/ops.hpp"
#include "attnforge/rng.hpp"

namespace attnforge {

void NoiseSpec::validate() const {
  if (!(level >= 0.0 && level <= kMaxNoiseLevel)) {
    throw ConfigError("noise level " + std::to_string(level) + " is outside [0, 0.40]");
  }
}

template <typename T>
double mean_row_norm(const Tensor<T>& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(x[i * d + j]) * static_cast<double>(x[i * d + j]);
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(n);
}

template <typename T>
Tensor<T> inject_noise(const Tensor<T>& embeddings, const NoiseSpec& spec) {
  spec.validate();
  if (spec.level == 0.0) return embeddings;
  const std::size_t d = embeddings.cols();
  const double sigma = spec.level * mean_row_norm(embeddings) / std::sqrt(static_cast<double>(d));
  Rng rng(spec.seed);
  std::vector<T> g(embeddings.size());
  for (auto& v : g) v = static_cast<T>(sigma * rng.normal());
  return add(embeddings, Tensor<T>(embeddings.shape(), std::move(g)));
}

template double mean_row_norm(const Tensor<float>&);
template double mean_row_norm(const Tensor<double>&);
template Tensor<float> inject_noise(const Tensor<float>&, const NoiseSpec&);
template Tensor<double> inject_noise(const Tensor<double>&, const NoiseSpec&);

}  // namespace attnforge
