#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "attnforge/errors.hpp"
#include "attnforge/ops.hpp"
#include "oracles.hpp"

using namespace attnforge;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double mean = 0.0, double sigma = 1.0) {
  const auto n = element_count(shape);
  return Tensor<double>(std::move(shape), oracle::gaussian(n, rng, mean, sigma));
}

using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Max error between autodiff and central differences of Σ f(inputs)⊙R,
/// relative for entries above 1e-4 and absolute below.
double gradient_error(const Fn& f, std::vector<Tensor<double>> inputs, std::uint64_t seed) {
  Rng rng(seed);
  const auto probe = f(inputs);
  const auto r = random_tensor(probe.shape(), rng);
  auto loss_of = [&](const std::vector<Tensor<double>>& in) { return sum(mul(f(in), r)); };

  Tape<double> tape;
  std::vector<Tensor<double>> tracked;
  for (const auto& t : inputs) tracked.push_back(tape.track(t));
  const auto grads = tape.backward(loss_of(tracked));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto g = grads.of(tracked[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      const double numeric = oracle::central_difference(
          [&](double x) {
            auto in = inputs;
            in[k].mutable_data()[i] = x;
            return loss_of(in).item();
          },
          x0, 1e-5);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(g[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul matches the triple-loop oracle for assorted shapes") {
  Rng rng(11);
  for (auto [n, k, p] : {std::tuple{1, 1, 1}, {3, 5, 2}, {7, 1, 9}, {5, 130, 3}, {33, 17, 600}, {4, 260, 257}}) {
    const auto a = random_tensor({std::size_t(n), std::size_t(k)}, rng);
    const auto b = random_tensor({std::size_t(k), std::size_t(p)}, rng);
    const auto c = matmul(a, b);
    const auto want = oracle::matmul({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, n, k, p);
    CHECK(oracle::max_abs_diff({c.data().begin(), c.data().end()}, want) < 1e-11);
  }
}

TEST_CASE("matmul gradients use both transposed kernels correctly") {
  Rng rng(12);
  for (auto [n, k, p] : {std::tuple{2, 3, 4}, {5, 7, 6}, {9, 2, 5}}) {
    const auto a = random_tensor({std::size_t(n), std::size_t(k)}, rng);
    const auto b = random_tensor({std::size_t(k), std::size_t(p)}, rng);
    CHECK(gradient_error([](const auto& in) { return matmul(in[0], in[1]); }, {a, b}, 5) < 1e-7);
  }
}

TEST_CASE("matmul rejects mismatched shapes and names them") {
  const auto a = Tensor<double>::zeros({2, 3});
  const auto b = Tensor<double>::zeros({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("diag_scale equals multiplication by an explicit diagonal matrix") {
  Rng rng(13);
  const std::size_t n = 6, d = 5;
  const auto x = random_tensor({n, d}, rng);
  const auto s = random_tensor({d}, rng);
  oracle::Mat diag(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) diag[j * d + j] = s[j];
  const auto want = oracle::matmul({x.data().begin(), x.data().end()}, diag, n, d, d);
  const auto got = diag_scale(x, s);
  CHECK(oracle::max_abs_diff({got.data().begin(), got.data().end()}, want) < 1e-15);
  CHECK(gradient_error([](const auto& in) { return diag_scale(in[0], in[1]); }, {x, s}, 6) < 1e-7);
  CHECK_THROWS_AS(diag_scale(x, Tensor<double>::zeros({d + 1})), DimensionError);
  CHECK_THROWS_AS(diag_scale(x, Tensor<double>::zeros({1, d})), DimensionError);
}

TEST_CASE("softmax rows agree with an extended-precision oracle and sum to one") {
  Rng rng(14);
  const auto x = random_tensor({8, 13}, rng, 0.0, 20.0);
  const auto p = softmax_rows(x);
  for (std::size_t i = 0; i < 8; ++i) {
    std::vector<double> row(x.data().begin() + i * 13, x.data().begin() + (i + 1) * 13);
    const auto want = oracle::softmax(row);
    double total = 0.0;
    for (std::size_t j = 0; j < 13; ++j) {
      CHECK(std::abs(p(i, j) - want[j]) < 1e-15);
      total += p(i, j);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  CHECK(gradient_error([](const auto& in) { return softmax_rows(in[0]); }, {random_tensor({3, 4}, rng)}, 7) < 1e-7);
}

TEST_CASE("softmax handles masked entries and rejects bad rows") {
  const double inf = std::numeric_limits<double>::infinity();
  const auto p = softmax_rows(Tensor<double>({1, 3}, {0.0, -inf, 0.0}));
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 1) == 0.0);
  CHECK_THROWS_AS(softmax_rows(Tensor<double>({1, 2}, {-inf, -inf})), NumericError);
  CHECK_THROWS_AS(softmax_rows(Tensor<double>({1, 2}, {0.0, inf})), NumericError);
  CHECK_THROWS_AS(softmax_rows(Tensor<double>({1, 2}, {0.0, std::nan("")})), NumericError);
  // Large logits do not overflow.
  const auto big = softmax_rows(Tensor<double>({1, 2}, {1000.0, 1000.0}));
  CHECK(big(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("elementwise and structural ops have correct gradients") {
  Rng rng(15);
  const auto a = random_tensor({3, 4}, rng);
  const auto b = random_tensor({3, 4}, rng);
  const auto row = random_tensor({4}, rng);
  CHECK(gradient_error([](const auto& in) { return add(in[0], in[1]); }, {a, b}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return mul(in[0], in[1]); }, {a, b}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return add_row(in[0], in[1]); }, {a, row}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return scale(in[0], -2.5); }, {a}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return transpose(in[0]); }, {a}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return reshape(in[0], {2, 6}); }, {a}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return slice_cols(in[0], 1, 2); }, {a}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return concat_cols<double>({in[0], in[1]}); }, {a, b}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return gelu(in[0]); }, {a}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return mean_rows(in[0]); }, {a}, 1) < 1e-7);
  CHECK(gradient_error([](const auto& in) { return mean(in[0]); }, {a}, 1) < 1e-7);
}

TEST_CASE("gelu uses the exact erf form") {
  const auto y = gelu(Tensor<double>({3}, {-1.0, 0.0, 2.0}));
  for (auto [i, x] : {std::pair{0, -1.0}, {1, 0.0}, {2, 2.0}}) {
    CHECK(y[i] == doctest::Approx(0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)))).epsilon(1e-15));
  }
}

TEST_CASE("layer norm normalises rows and differentiates correctly") {
  Rng rng(16);
  const auto x = random_tensor({4, 6}, rng, 3.0, 2.0);
  const auto ones = Tensor<double>::filled({6}, 1.0);
  const auto zeros = Tensor<double>::zeros({6});
  const auto y = layer_norm(x, ones, zeros);
  for (std::size_t i = 0; i < 4; ++i) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 6; ++j) m += y(i, j) / 6;
    for (std::size_t j = 0; j < 6; ++j) v += (y(i, j) - m) * (y(i, j) - m) / 6;
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v - 1.0) < 1e-9);
  }
  const auto gamma = random_tensor({6}, rng, 1.0, 0.3);
  const auto beta = random_tensor({6}, rng);
  CHECK(gradient_error([](const auto& in) { return layer_norm(in[0], in[1], in[2], 1e-5); }, {x, gamma, beta}, 2) <
        1e-6);
}

TEST_CASE("embedding lookup gathers rows and scatters gradients") {
  Rng rng(17);
  const auto table = random_tensor({5, 3}, rng);
  const std::vector<std::int32_t> ids{4, 0, 4};
  const auto e = embedding_lookup(table, std::span<const std::int32_t>(ids));
  CHECK(e(0, 2) == table(4, 2));
  CHECK(e(1, 0) == table(0, 0));
  CHECK(gradient_error([&](const auto& in) { return embedding_lookup(in[0], std::span<const std::int32_t>(ids)); },
                       {table}, 3) < 1e-7);
  const std::vector<std::int32_t> bad{5};
  CHECK_THROWS_AS(embedding_lookup(table, std::span<const std::int32_t>(bad)), InputError);
  const std::vector<std::int32_t> negative{-1};
  CHECK_THROWS_AS(embedding_lookup(table, std::span<const std::int32_t>(negative)), InputError);
}

TEST_CASE("cross entropy ignores negative targets and averages the rest") {
  const Tensor<double> logits({3, 2}, {0.0, 0.0, 1.0, 3.0, 5.0, 5.0});
  const std::vector<std::int32_t> targets{0, -1, 1};
  const double got = cross_entropy_with_logits(logits, std::span<const std::int32_t>(targets)).item();
  CHECK(got == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  Rng rng(18);
  const auto l = random_tensor({4, 5}, rng);
  const std::vector<std::int32_t> t{1, 4, -1, 0};
  CHECK(gradient_error(
            [&](const auto& in) {
              return reshape(cross_entropy_with_logits(in[0], std::span<const std::int32_t>(t)), {1});
            },
            {l}, 4) < 1e-7);

  const std::vector<std::int32_t> none{-1, -1, -1};
  CHECK_THROWS_AS(cross_entropy_with_logits(logits, std::span<const std::int32_t>(none)), ContractError);
  const std::vector<std::int32_t> out_of_range{0, 2, 0};
  CHECK_THROWS_AS(cross_entropy_with_logits(logits, std::span<const std::int32_t>(out_of_range)), InputError);
}
