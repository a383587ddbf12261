#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "attnforge/encoder.hpp"
#include "attnforge/experiments/noise.hpp"
#include "attnforge/experiments/tasks.hpp"

namespace attnforge {

enum class LrSchedule { Constant, Linear };

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 64;
  double lr = 4e-3;
  LrSchedule schedule = LrSchedule::Constant;
  std::size_t warmup_steps = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled weight decay, applied to matrices only.
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  Task task = Task::Copy;
  std::size_t seq_len = 16;
  double mask_ratio = 0.15;
  std::size_t num_classes = 4;
  std::size_t eval_examples = 64;
  std::size_t eval_every = 50;
  /// Embedding noise during training (0 disables it; evaluation stays clean).
  double train_noise = 0.0;

  void validate() const;
  TaskSpec task_spec(const ModelConfig& model) const;
  double lr_at(std::size_t step) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossRecord {
  std::size_t step = 0;  // optimizer steps completed before this record
  double train_loss = 0.0;
  std::optional<double> eval_loss;
};

struct TrainResult {
  ModelParams<double> model;
  std::vector<LossRecord> history;
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;

  /// Eval loss recorded at `step`, if any.
  std::optional<double> eval_loss_at(std::size_t step) const;
};

/// Adam with bias correction and decoupled weight decay.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps, double weight_decay);

  /// Updates `params` in place from gradients listed in for_each_param order.
  void step(ModelParams<double>& params, const std::vector<Tensor<double>>& grads, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Held-out examples with fixed mask positions (empty for classification).
struct EvalSet {
  TaskSpec spec;
  std::vector<Example> examples;
  std::vector<std::vector<std::size_t>> mask_positions;
};

EvalSet make_eval_set(const TrainConfig& config, const ModelConfig& model, std::size_t count, std::uint64_t seed);

/// Mean loss over the evaluation set (MLM cross-entropy or classification cross-entropy).
double evaluate_loss(const ModelParams<double>& model, const EvalSet& eval, const std::optional<NoiseSpec>& noise = {});
/// Fraction of correct predictions: class labels, or masked tokens for MLM tasks.
double evaluate_accuracy(const ModelParams<double>& model, const EvalSet& eval, const std::optional<NoiseSpec>& noise = {});

/// Seeded training loop. Throws RunError when the loss becomes non-finite.
TrainResult train(const TrainConfig& config, const ModelConfig& model_config,
                  const std::function<void(const LossRecord&)>& on_record = {});

}  // namespace attnforge
