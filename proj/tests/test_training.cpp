#include <doctest.h>

#include <cmath>

#include "attnforge/experiments/train.hpp"

using namespace attnforge;

// Default training config on the tiny copy-task model; about ten seconds per variant.
TEST_CASE("every variant cuts copy-task loss by 30% within 200 steps") {
  TrainConfig t;
  t.steps = 200;
  t.eval_every = 200;
  t.seed = 3;
  for (auto v : kAllVariants) {
    CAPTURE(variant_name(v));
    const auto r = train(t, ModelConfig::tiny(v));
    CHECK(r.initial_eval_loss == doctest::Approx(std::log(64.0)).epsilon(0.1));
    CHECK(r.final_eval_loss <= 0.7 * r.initial_eval_loss);
  }
}
