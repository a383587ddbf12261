#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "attnforge/attention.hpp"

namespace attnforge {

enum class Precision { Float, Double };

std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view name);

struct BenchShape {
  std::size_t d = 768;
  std::size_t n = 128;
  std::size_t batch = 8;
  std::size_t heads = 12;
  std::size_t ffn = 0;  // 0 → 4d

  void validate() const;
};

struct BenchOptions {
  /// Standard is always timed as the baseline, even when not listed.
  std::vector<AttentionVariant> variants{AttentionVariant::Standard, AttentionVariant::SharedQKV};
  BenchShape shape;
  Precision precision = Precision::Float;
  std::size_t warmup = 5;
  std::size_t trials = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchResult {
  AttentionVariant variant = AttentionVariant::Standard;
  BenchShape shape;
  Precision precision = Precision::Float;
  std::vector<double> samples_ms;  // one per timed trial
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::uint64_t projection_macs_per_token = 0;
  /// Projection MACs of this variant over Standard's.
  double mac_ratio_vs_standard = 1.0;
  /// Standard mean wall-clock over this variant's mean.
  double speedup_vs_standard = 1.0;
};

nlohmann::json to_json(const BenchResult& r);

/// Times forward+backward of one encoder block per variant on identical
/// inputs. Variants are interleaved within every trial; single-threaded.
std::vector<BenchResult> bench(const BenchOptions& options);

}  // namespace attnforge
