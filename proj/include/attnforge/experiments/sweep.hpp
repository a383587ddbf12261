#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "attnforge/csv.hpp"
#include "attnforge/experiments/train.hpp"

namespace attnforge {

struct SweepRow {
  double level = 0.0;
  double acc_a = 0.0;  // averaged over noise seeds
  double acc_b = 0.0;
  std::vector<double> per_seed_a, per_seed_b;
};

struct SweepOptions {
  std::vector<double> levels{0.0, 0.2, 0.4};
  std::size_t noise_seeds = 5;
  std::uint64_t seed = 0;
  /// Worker threads over (level, seed) cells; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
};

/// Accuracy of two trained models on `eval` with noise injected at the
/// embedding output. Each noise seed fixes one Gaussian direction per
/// example; the level only rescales it. Untrained model → ContractError.
std::vector<SweepRow> robustness_sweep(const ModelParams<double>& model_a, const ModelParams<double>& model_b,
                                       const EvalSet& eval, const SweepOptions& options);

/// Columns level, acc_a, acc_b.
CsvTable sweep_table(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const SweepRow& row);

struct SweepExperiment {
  TrainConfig train;
  ModelConfig model;  // variant is overridden by variant_a / variant_b
  AttentionVariant variant_a = AttentionVariant::Standard;
  AttentionVariant variant_b = AttentionVariant::SharedQKV;
  std::size_t eval_examples = 256;
  SweepOptions sweep;
};

struct SweepExperimentResult {
  TrainResult a, b;
  std::vector<SweepRow> rows;
};

/// Trains both variants on the same task and seed, then sweeps noise levels.
SweepExperimentResult run_sweep_experiment(const SweepExperiment& experiment);

}  // namespace attnforge
