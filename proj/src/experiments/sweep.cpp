#include "attnforge/experiments/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "attnforge/errors.hpp"

namespace attnforge {

void SweepOptions::validate() const {
  if (levels.empty()) throw ConfigError("sweep needs at least one noise level");
  for (double level : levels) NoiseSpec{level, 0}.validate();
  if (noise_seeds < 1) throw ConfigError("sweep needs at least one noise seed");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

namespace {

// Runs job(i) for i in [0, count) on up to `threads` workers; rethrows the first failure.
template <typename Job>
void parallel_for(std::size_t count, std::size_t threads, Job job) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < std::min(threads, count); ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<SweepRow> robustness_sweep(const ModelParams<double>& model_a, const ModelParams<double>& model_b,
                                       const EvalSet& eval, const SweepOptions& options) {
  options.validate();
  if (model_a.trained_steps == 0 || model_b.trained_steps == 0) {
    throw ContractError("robustness sweep needs trained models");
  }
  if (model_a.config.vocab != model_b.config.vocab || model_a.config.num_classes != model_b.config.num_classes) {
    throw ContractError("robustness sweep models were not trained on the same task");
  }

  const std::size_t levels = options.levels.size(), seeds = options.noise_seeds;
  std::vector<double> acc_a(levels * seeds), acc_b(levels * seeds);
  const Rng root(options.seed);
  parallel_for(levels * seeds, options.threads, [&](std::size_t cell) {
    const std::size_t l = cell / seeds, s = cell % seeds;
    const NoiseSpec noise{options.levels[l], root.split(s)()};
    acc_a[cell] = evaluate_accuracy(model_a, eval, noise);
    acc_b[cell] = evaluate_accuracy(model_b, eval, noise);
  });

  std::vector<SweepRow> rows;
  for (std::size_t l = 0; l < levels; ++l) {
    SweepRow row;
    row.level = options.levels[l];
    row.per_seed_a.assign(acc_a.begin() + l * seeds, acc_a.begin() + (l + 1) * seeds);
    row.per_seed_b.assign(acc_b.begin() + l * seeds, acc_b.begin() + (l + 1) * seeds);
    for (std::size_t s = 0; s < seeds; ++s) {
      row.acc_a += row.per_seed_a[s];
      row.acc_b += row.per_seed_b[s];
    }
    row.acc_a /= static_cast<double>(seeds);
    row.acc_b /= static_cast<double>(seeds);
    rows.push_back(std::move(row));
  }
  return rows;
}

CsvTable sweep_table(const std::vector<SweepRow>& rows) {
  CsvTable table({"level", "acc_a", "acc_b"});
  for (const auto& r : rows) table.add_row({format_double(r.level), format_double(r.acc_a), format_double(r.acc_b)});
  return table;
}

nlohmann::json to_json(const SweepRow& row) {
  return {{"level", row.level},
          {"acc_a", row.acc_a},
          {"acc_b", row.acc_b},
          {"per_seed_a", row.per_seed_a},
          {"per_seed_b", row.per_seed_b}};
}

SweepExperimentResult run_sweep_experiment(const SweepExperiment& experiment) {
  experiment.sweep.validate();
  ModelConfig config_a = experiment.model, config_b = experiment.model;
  config_a.variant = experiment.variant_a;
  config_b.variant = experiment.variant_b;

  SweepExperimentResult result;
  parallel_for(2, experiment.sweep.threads, [&](std::size_t i) {
    if (i == 0) {
      result.a = train(experiment.train, config_a);
    } else {
      result.b = train(experiment.train, config_b);
    }
  });
  // A fresh evaluation seed, disjoint from the one used for training-time evaluation.
  const auto eval = make_eval_set(experiment.train, config_a, experiment.eval_examples,
                                  Rng(experiment.train.seed).split(0x5ee9)());
  result.rows = robustness_sweep(result.a.model, result.b.model, eval, experiment.sweep);
  return result;
}

}  // namespace attnforge
