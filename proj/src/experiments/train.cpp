#include "attnforge/experiments/train.hpp"

#include <algorithm>
#include <cmath>

#include "attnforge/ops.hpp"

namespace attnforge {

namespace {

// Labels for the independent random streams derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDataStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kDropoutStream = 4;
constexpr std::uint64_t kNoiseStream = 5;

std::string_view schedule_name(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "linear"; }

LrSchedule parse_schedule(std::string_view s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "linear") return LrSchedule::Linear;
  throw ConfigError("unknown lr schedule '" + std::string(s) + "' (expected constant or linear)");
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite non-negative number");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask ratio must lie strictly between 0 and 1");
  if (eval_examples < 1) throw ConfigError("eval_examples must be at least 1");
  NoiseSpec{train_noise, 0}.validate();
}

TaskSpec TrainConfig::task_spec(const ModelConfig& model) const {
  TaskSpec spec{task, seq_len, model.vocab, num_classes, 0.25};
  spec.validate();
  if (seq_len > model.max_seq) {
    throw ConfigError("task sequence length " + std::to_string(seq_len) + " exceeds max_seq " +
                      std::to_string(model.max_seq));
  }
  if (is_classification(task) != (model.num_classes > 0)) {
    throw ConfigError("classification tasks need num_classes > 0 in the model config; MLM tasks need 0");
  }
  if (is_classification(task) && model.num_classes != num_classes) {
    throw ConfigError("model num_classes does not match the task's num_classes");
  }
  return spec;
}

double TrainConfig::lr_at(std::size_t step) const {
  double scale = 1.0;
  if (warmup_steps > 0 && step < warmup_steps) scale = static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (schedule == LrSchedule::Linear && step >= warmup_steps) {
    const double span = static_cast<double>(steps - std::min(steps, warmup_steps));
    if (span > 0) scale = 1.0 - static_cast<double>(step - warmup_steps) / span;
  }
  return lr * scale;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"steps", c.steps},
                     {"batch", c.batch},
                     {"lr", c.lr},
                     {"schedule", std::string(schedule_name(c.schedule))},
                     {"warmup_steps", c.warmup_steps},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"weight_decay", c.weight_decay},
                     {"seed", c.seed},
                     {"task", std::string(task_name(c.task))},
                     {"seq_len", c.seq_len},
                     {"mask_ratio", c.mask_ratio},
                     {"num_classes", c.num_classes},
                     {"eval_examples", c.eval_examples},
                     {"eval_every", c.eval_every},
                     {"train_noise", c.train_noise}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    c = TrainConfig{};
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.schedule = parse_schedule(j.value("schedule", std::string("constant")));
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.task = parse_task(j.value("task", std::string("copy")));
    c.seq_len = j.value("seq_len", c.seq_len);
    c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.eval_examples = j.value("eval_examples", c.eval_examples);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.train_noise = j.value("train_noise", c.train_noise);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  c.validate();
}

std::optional<double> TrainResult::eval_loss_at(std::size_t step) const {
  for (const auto& r : history) {
    if (r.step == step && r.eval_loss) return r.eval_loss;
  }
  return std::nullopt;
}

Adam::Adam(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void Adam::step(ModelParams<double>& params, const std::vector<Tensor<double>>& grads, double lr) {
  if (m_.empty()) {
    params.for_each_param([&](const std::string&, const Tensor<double>& t) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    });
  }
  if (grads.size() != m_.size()) throw ContractError("Adam: gradient list does not match the parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  params.for_each_param([&](const std::string& name, Tensor<double>& t) {
    const auto g = grads[k].data();
    if (g.size() != t.size()) throw ContractError("Adam: gradient for " + name + " has the wrong size");
    auto& m = m_[k];
    auto& v = v_[k];
    const bool decay = weight_decay_ > 0.0 && t.rank() == 2;
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] -= lr * (update + (decay ? weight_decay_ * w[i] : 0.0));
    }
    ++k;
  });
}

EvalSet make_eval_set(const TrainConfig& config, const ModelConfig& model, std::size_t count, std::uint64_t seed) {
  EvalSet eval;
  eval.spec = config.task_spec(model);
  Rng rng = Rng(seed).split(kEvalStream);
  eval.examples = sample_examples(eval.spec, count, rng);
  if (!is_classification(config.task)) {
    for (const auto& ex : eval.examples) {
      eval.mask_positions.push_back(choose_mask_positions(ex.tokens.size(), config.mask_ratio, rng));
    }
  }
  return eval;
}

namespace {

ForwardOptions<double> noisy_options(const std::optional<NoiseSpec>& noise, std::size_t index) {
  ForwardOptions<double> opts;
  if (noise && noise->level > 0.0) {
    NoiseSpec spec{noise->level, Rng(noise->seed).split(index)()};
    opts.embedding_hook = [spec](const Tensor<double>& x) { return inject_noise(x, spec); };
  }
  return opts;
}

std::size_t argmax_row(const Tensor<double>& logits, std::size_t row) {
  const std::size_t v = logits.cols();
  const auto begin = logits.data().begin() + row * v;
  return static_cast<std::size_t>(std::max_element(begin, begin + v) - begin);
}

}  // namespace

double evaluate_loss(const ModelParams<double>& model, const EvalSet& eval, const std::optional<NoiseSpec>& noise) {
  double total = 0.0;
  for (std::size_t i = 0; i < eval.examples.size(); ++i) {
    const auto& ex = eval.examples[i];
    const auto opts = noisy_options(noise, i);
    if (is_classification(eval.spec.task)) {
      const std::int32_t label[1] = {ex.label};
      total += cross_entropy_with_logits(classify_logits(model, std::span<const std::int32_t>(ex.tokens), opts),
                                         std::span<const std::int32_t>(label))
                   .item();
    } else {
      total += mlm_loss_at(model, std::span<const std::int32_t>(ex.tokens),
                           std::span<const std::size_t>(eval.mask_positions[i]), opts)
                   .item();
    }
  }
  return total / static_cast<double>(eval.examples.size());
}

double evaluate_accuracy(const ModelParams<double>& model, const EvalSet& eval, const std::optional<NoiseSpec>& noise) {
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < eval.examples.size(); ++i) {
    const auto& ex = eval.examples[i];
    const auto opts = noisy_options(noise, i);
    if (is_classification(eval.spec.task)) {
      const auto logits = classify_logits(model, std::span<const std::int32_t>(ex.tokens), opts);
      correct += argmax_row(logits, 0) == static_cast<std::size_t>(ex.label) ? 1 : 0;
      ++total;
    } else {
      auto input = ex.tokens;
      for (auto p : eval.mask_positions[i]) input[p] = kMaskToken;
      const auto logits = mlm_logits(model, forward(model, std::span<const std::int32_t>(input), opts));
      for (auto p : eval.mask_positions[i]) {
        correct += argmax_row(logits, p) == static_cast<std::size_t>(ex.tokens[p]) ? 1 : 0;
        ++total;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(const TrainConfig& config, const ModelConfig& model_config,
                  const std::function<void(const LossRecord&)>& on_record) {
  config.validate();
  model_config.validate();
  const auto spec = config.task_spec(model_config);
  const Rng root(config.seed);
  Rng init_rng = root.split(kInitStream);

  TrainResult result;
  result.model = init_model<double>(model_config, init_rng);
  const auto eval = make_eval_set(config, model_config, config.eval_examples, config.seed);
  Adam adam(config.beta1, config.beta2, config.eps, config.weight_decay);

  auto emit = [&](LossRecord r) {
    if (on_record) on_record(r);
    result.history.push_back(r);
  };

  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng data_rng = root.split(kDataStream).split(step);
    Rng dropout_rng = root.split(kDropoutStream).split(step);
    const auto batch = sample_examples(spec, config.batch, data_rng);

    Tape<double> tape;
    const auto bound = track_params(result.model, tape);
    std::optional<Tensor<double>> total;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      ForwardOptions<double> opts;
      opts.training = true;
      opts.rng = &dropout_rng;
      if (config.train_noise > 0.0) {
        NoiseSpec noise{config.train_noise, root.split(kNoiseStream).split(step).split(b)()};
        opts.embedding_hook = [noise](const Tensor<double>& x) { return inject_noise(x, noise); };
      }
      const auto tokens = std::span<const std::int32_t>(batch[b].tokens);
      Tensor<double> loss;
      if (is_classification(spec.task)) {
        const std::int32_t label[1] = {batch[b].label};
        loss = cross_entropy_with_logits(classify_logits(bound, tokens, opts), std::span<const std::int32_t>(label));
      } else {
        loss = mlm_loss(bound, tokens, config.mask_ratio, data_rng, opts);
      }
      total = total ? add(*total, loss) : loss;
    }
    const auto loss = scale(*total, 1.0 / static_cast<double>(batch.size()));
    const double value = loss.item();
    if (!std::isfinite(value)) throw RunError("training loss became non-finite", step);

    LossRecord record{step, value, std::nullopt};
    if (step == 0) {
      result.initial_eval_loss = evaluate_loss(result.model, eval);
      record.eval_loss = result.initial_eval_loss;
    } else if (config.eval_every > 0 && step % config.eval_every == 0) {
      record.eval_loss = evaluate_loss(result.model, eval);
    }
    emit(record);

    const auto grads = tape.backward(loss);
    std::vector<Tensor<double>> ordered;
    bound.for_each_param([&](const std::string&, const Tensor<double>& t) { ordered.push_back(grads.of(t)); });
    adam.step(result.model, ordered, config.lr_at(step));
    ++result.model.trained_steps;
  }

  result.final_eval_loss = evaluate_loss(result.model, eval);
  if (!std::isfinite(result.final_eval_loss)) throw RunError("evaluation loss became non-finite", config.steps);
  emit(LossRecord{config.steps, std::nan(""), result.final_eval_loss});
  return result;
}

}  // namespace attnforge
