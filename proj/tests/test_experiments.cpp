#include <doctest.h>

#include <bit>
#include <cmath>
#include <map>

#include "attnforge/errors.hpp"
#include "attnforge/experiments/bench.hpp"
#include "attnforge/experiments/gradcheck.hpp"
#include "attnforge/experiments/noise.hpp"
#include "attnforge/experiments/sweep.hpp"
#include "attnforge/experiments/tasks.hpp"
#include "attnforge/experiments/train.hpp"
#include "oracles.hpp"

using namespace attnforge;

namespace {

Tensor<double> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor<double>({rows, cols}, oracle::gaussian(rows * cols, rng, 0.3, 1.0));
}

bool bit_identical(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

TrainConfig quick_train(std::size_t steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch = 8;
  t.eval_examples = 16;
  t.eval_every = steps;
  t.seq_len = 8;
  t.seed = 11;
  return t;
}

ModelConfig small_model(AttentionVariant v) {
  ModelConfig c = ModelConfig::tiny(v);
  c.layers = 1;
  c.d_model = 16;
  c.heads = 2;
  c.vocab = 20;
  c.max_seq = 8;
  return c;
}

}  // namespace

TEST_CASE("noise at level zero is the identity") {
  const auto x = random_matrix(5, 12, 1);
  const auto y = inject_noise(x, NoiseSpec{0.0, 99});
  CHECK(bit_identical(x.data(), y.data()));
}

TEST_CASE("noise rows have norm close to level times the mean row norm") {
  const auto x = random_matrix(1000, 768, 2);
  const double mu = mean_row_norm(x);
  for (double level : {0.1, 0.2, 0.4}) {
    const auto y = inject_noise(x, NoiseSpec{level, 5});
    double total = 0.0;
    for (std::size_t r = 0; r < 1000; ++r) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 768; ++c) {
        const double e = y.data()[r * 768 + c] - x.data()[r * 768 + c];
        sq += e * e;
      }
      total += std::sqrt(sq);
    }
    const double ratio = total / 1000.0 / mu;
    CAPTURE(level);
    CHECK(ratio > 0.9 * level);
    CHECK(ratio < 1.1 * level);
  }
}

TEST_CASE("noise is seeded and validated") {
  const auto x = random_matrix(4, 8, 3);
  CHECK(bit_identical(inject_noise(x, NoiseSpec{0.2, 7}).data(), inject_noise(x, NoiseSpec{0.2, 7}).data()));
  CHECK_FALSE(bit_identical(inject_noise(x, NoiseSpec{0.2, 7}).data(), inject_noise(x, NoiseSpec{0.2, 8}).data()));
  CHECK_THROWS_AS(inject_noise(x, NoiseSpec{0.5, 1}), ConfigError);
  CHECK_THROWS_AS(inject_noise(x, NoiseSpec{-0.1, 1}), ConfigError);
}

TEST_CASE("synthetic tasks") {
  Rng rng(4);
  TaskSpec spec;
  spec.seq_len = 10;
  spec.vocab = 30;

  spec.task = Task::Copy;
  for (const auto& ex : sample_examples(spec, 20, rng)) {
    for (std::size_t i = 0; i < 5; ++i) CHECK(ex.tokens[i] == ex.tokens[5 + i]);
    for (auto t : ex.tokens) CHECK((t >= kFirstDataToken && t < 30));
  }
  spec.task = Task::Reversal;
  for (const auto& ex : sample_examples(spec, 20, rng)) {
    for (std::size_t i = 0; i < 5; ++i) CHECK(ex.tokens[i] == ex.tokens[9 - i]);
  }
  spec.task = Task::MlmSynthetic;
  std::map<std::int32_t, std::int32_t> successor;
  for (const auto& ex : sample_examples(spec, 50, rng)) {
    for (std::size_t i = 1; i < ex.tokens.size(); ++i) {
      auto [it, inserted] = successor.emplace(ex.tokens[i - 1], ex.tokens[i]);
      CHECK(it->second == ex.tokens[i]);
    }
  }
  spec.task = Task::ToyClassify;
  spec.num_classes = 3;
  spec.class_signal = 1.0;
  for (const auto& ex : sample_examples(spec, 20, rng)) {
    REQUIRE((ex.label >= 0 && ex.label < 3));
    for (auto t : ex.tokens) CHECK((t - kFirstDataToken) % 3 == ex.label);
  }

  for (auto t : {Task::Copy, Task::Reversal, Task::MlmSynthetic, Task::ToyClassify}) {
    CHECK(parse_task(task_name(t)) == t);
  }
  CHECK_THROWS_AS(parse_task("nope"), ConfigError);
  spec.task = Task::Copy;
  spec.seq_len = 7;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("Adam first step moves each weight by about lr against its gradient sign") {
  Rng rng(5);
  auto model = init_model<double>(small_model(AttentionVariant::SharedQKV), rng);
  const auto before = model;
  std::vector<Tensor<double>> grads;
  std::size_t k = 0;
  model.for_each_param([&](const std::string&, const Tensor<double>& t) {
    std::vector<double> g(t.size());
    for (auto& v : g) {
      v = (k % 3 == 0 ? -1.0 : 1.0) * (0.5 + static_cast<double>(k % 7));
      ++k;
    }
    grads.emplace_back(t.shape(), std::move(g));
  });
  Adam adam(0.9, 0.999, 1e-8, 0.0);
  adam.step(model, grads, 0.01);
  CHECK(adam.steps_taken() == 1);

  std::vector<double> b, a, g;
  before.for_each_param([&](const std::string&, const Tensor<double>& t) { b.insert(b.end(), t.data().begin(), t.data().end()); });
  model.for_each_param([&](const std::string&, const Tensor<double>& t) { a.insert(a.end(), t.data().begin(), t.data().end()); });
  for (const auto& t : grads) g.insert(g.end(), t.data().begin(), t.data().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // Bias-corrected moments equal g and g² after one step.
    const double expected = b[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    worst = std::max(worst, std::abs(a[i] - expected));
  }
  CHECK(worst < 1e-15);
}

TEST_CASE("learning rate schedule") {
  TrainConfig t;
  t.steps = 100;
  t.lr = 1.0;
  t.warmup_steps = 10;
  t.schedule = LrSchedule::Linear;
  CHECK(t.lr_at(0) == doctest::Approx(0.1));
  CHECK(t.lr_at(9) == doctest::Approx(1.0));
  CHECK(t.lr_at(99) < 0.05);
  t.schedule = LrSchedule::Constant;
  t.warmup_steps = 0;
  CHECK(t.lr_at(50) == 1.0);

  auto bad = t;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = t;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  nlohmann::json j = t;
  CHECK(j.get<TrainConfig>().lr == t.lr);
}

TEST_CASE("zero learning rate leaves the model bit-identical") {
  auto t = quick_train(3);
  t.lr = 0.0;
  const auto cfg = small_model(AttentionVariant::Standard);
  Rng rng(Rng(t.seed).split(1));
  const auto init = init_model<double>(cfg, rng);
  const auto result = train(t, cfg);
  CHECK(result.model.trained_steps == 3);
  std::vector<double> a, b;
  init.for_each_param([&](const std::string&, const Tensor<double>& x) { a.insert(a.end(), x.data().begin(), x.data().end()); });
  result.model.for_each_param([&](const std::string&, const Tensor<double>& x) { b.insert(b.end(), x.data().begin(), x.data().end()); });
  CHECK(bit_identical(a, b));
  CHECK(result.final_eval_loss == result.initial_eval_loss);
}

TEST_CASE("training is reproducible from the seed") {
  const auto t = quick_train(4);
  const auto cfg = small_model(AttentionVariant::Pairwise);
  const auto r1 = train(t, cfg);
  const auto r2 = train(t, cfg);
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].step == r2.history[i].step);
    CHECK(std::bit_cast<std::uint64_t>(r1.history[i].train_loss) == std::bit_cast<std::uint64_t>(r2.history[i].train_loss));
  }
  CHECK(r1.final_eval_loss == r2.final_eval_loss);
  auto other = t;
  other.seed = 12;
  CHECK(train(other, cfg).final_eval_loss != r1.final_eval_loss);
}

TEST_CASE("every variant learns the copy task a little in 60 steps") {
  auto t = quick_train(60);
  t.batch = 16;
  t.lr = 1e-2;
  t.seq_len = 8;
  for (auto v : kAllVariants) {
    CAPTURE(variant_name(v));
    const auto r = train(t, small_model(v));
    CHECK(r.final_eval_loss < r.initial_eval_loss);
    CHECK(r.initial_eval_loss == doctest::Approx(std::log(20.0)).epsilon(0.15));
  }
}

TEST_CASE("training config is checked against the model") {
  auto t = quick_train(1);
  t.seq_len = 32;
  CHECK_THROWS_AS(train(t, small_model(AttentionVariant::Standard)), ConfigError);
  t = quick_train(1);
  t.task = Task::ToyClassify;
  CHECK_THROWS_AS(train(t, small_model(AttentionVariant::Standard)), ConfigError);
}

TEST_CASE("classification training and accuracy") {
  auto t = quick_train(20);
  t.task = Task::ToyClassify;
  t.num_classes = 3;
  auto cfg = small_model(AttentionVariant::SharedQKV);
  cfg.num_classes = 3;
  const auto r = train(t, cfg);
  const auto eval = make_eval_set(t, cfg, 32, 9);
  CHECK(eval.mask_positions.empty());
  const double acc = evaluate_accuracy(r.model, eval);
  CHECK((acc >= 0.0 && acc <= 1.0));
}

TEST_CASE("gradient check passes for every variant") {
  for (auto v : kAllVariants) {
    const auto report = grad_check(v, GradCheckShape{}, 21);
    CAPTURE(report.subject);
    CHECK(report.passed(1e-5));
    bool has_diag = v != AttentionVariant::SharedQKV;
    for (const auto& e : report.entries) has_diag |= e.name.starts_with("d_");
    CHECK(has_diag);
  }
  CHECK(linear_grad_check(21).max_rel_error < 1e-9);
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(0.0, 1e-12) == doctest::Approx(1e-4));
  GradCheckShape too_big;
  too_big.n = 64;
  CHECK_THROWS_AS(grad_check(AttentionVariant::Standard, too_big, 1), ConfigError);
}

TEST_CASE("tiny benchmark") {
  BenchOptions o;
  o.variants = {AttentionVariant::SharedQKV, AttentionVariant::Symmetric};
  o.shape = BenchShape{16, 8, 2, 2, 0};
  o.precision = Precision::Double;
  o.warmup = 1;
  o.trials = 3;
  const auto results = bench(o);
  REQUIRE(results.size() == 3);
  CHECK(results[0].variant == AttentionVariant::Standard);
  CHECK(results[0].speedup_vs_standard == 1.0);
  for (const auto& r : results) {
    CHECK(r.samples_ms.size() == 3);
    CHECK(r.mean_ms > 0.0);
  }
  CHECK(results[1].mac_ratio_vs_standard == doctest::Approx((16.0 * 16 + 48) / (3.0 * 16 * 16)));
  CHECK(to_json(results[1]).contains("speedup_vs_standard"));
  CHECK(parse_precision(precision_name(Precision::Float)) == Precision::Float);
}

TEST_CASE("robustness sweep") {
  auto t = quick_train(5);
  const auto a = train(t, small_model(AttentionVariant::Standard)).model;
  const auto b = train(t, small_model(AttentionVariant::SharedQKV)).model;
  const auto eval = make_eval_set(t, a.config, 24, 77);

  SweepOptions o;
  o.levels = {0.0, 0.4};
  o.noise_seeds = 2;
  const auto rows = robustness_sweep(a, b, eval, o);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].acc_a == evaluate_accuracy(a, eval));
  CHECK(rows[0].acc_b == evaluate_accuracy(b, eval));
  CHECK(rows[1].per_seed_a.size() == 2);

  o.threads = 3;
  const auto threaded = robustness_sweep(a, b, eval, o);
  CHECK(threaded[1].acc_a == rows[1].acc_a);
  CHECK(threaded[1].acc_b == rows[1].acc_b);
  CHECK(sweep_table(rows).rows().size() == 2);

  Rng rng(1);
  const auto untrained = init_model<double>(small_model(AttentionVariant::Standard), rng);
  CHECK_THROWS_AS(robustness_sweep(untrained, b, eval, o), ContractError);
  o.levels = {0.6};
  CHECK_THROWS_AS(robustness_sweep(a, b, eval, o), ConfigError);
}
