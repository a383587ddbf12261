#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnforge/attention.hpp"

namespace attnforge {

struct GradCheckShape {
  std::size_t n = 4;
  std::size_t d = 16;
  std::size_t heads = 2;
  bool bias = false;

  void validate() const;
};

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::string subject;  // variant name, or "linear"
  GradCheckShape shape;
  std::uint64_t seed = 0;
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

nlohmann::json to_json(const GradCheckReport& report);

/// |a - f| / max(|a|, |f|, 1e-8) between autodiff and central differences.
double relative_error(double autodiff, double numeric);

/// Central differences (step `h`) against autodiff for every learnable of one
/// attention sub-layer, loss = Σ attend(X)ᵢⱼ·Rᵢⱼ with random X, R.
GradCheckReport grad_check(AttentionVariant variant, const GradCheckShape& shape, std::uint64_t seed,
                           double h = 1e-5);

/// Same procedure on loss = Σ (X·W)ᵢⱼ·Rᵢⱼ, whose gradient is exact.
GradCheckReport linear_grad_check(std::uint64_t seed, double h = 1e-5);

}  // namespace attnforge
