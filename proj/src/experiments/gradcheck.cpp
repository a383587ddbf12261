#include "attnforge/experiments/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "attnforge/errors.hpp"
#include "attnforge/ops.hpp"

namespace attnforge {

void GradCheckShape::validate() const {
  if (n == 0 || n > 8) throw ConfigError("gradient check needs 1 <= n <= 8");
  if (d == 0 || d > 32) throw ConfigError("gradient check needs 1 <= d <= 32");
  if (heads == 0 || d % heads != 0) throw ConfigError("gradient check needs heads dividing d");
}

double relative_error(double autodiff, double numeric) {
  const double denom = std::max({std::abs(autodiff), std::abs(numeric), 1e-8});
  return std::abs(autodiff - numeric) / denom;
}

nlohmann::json to_json(const GradCheckReport& report) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"name", e.name},
                       {"size", e.size},
                       {"max_rel_error", e.max_rel_error},
                       {"max_abs_error", e.max_abs_error},
                       {"worst_index", e.worst_index}});
  }
  return {{"subject", report.subject},
          {"n", report.shape.n},
          {"d", report.shape.d},
          {"heads", report.shape.heads},
          {"bias", report.shape.bias},
          {"seed", report.seed},
          {"max_rel_error", report.max_rel_error},
          {"max_abs_error", report.max_abs_error},
          {"params", entries}};
}

namespace {

Tensor<double> gaussian(Shape shape, double mean, double sigma, Rng& rng) {
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = mean + sigma * rng.normal();
  return Tensor<double>(std::move(shape), std::move(v));
}

// Parameters far from the near-degenerate training init, so every path carries signal.
AttentionParams<double> random_attention(AttentionVariant variant, const GradCheckShape& shape, Rng& rng) {
  auto params = init_attention<double>(variant, shape.d, shape.heads, shape.bias, rng);
  const double w_sigma = 1.0 / std::sqrt(static_cast<double>(shape.d));
  const double u_sigma = 1.0 / std::sqrt(static_cast<double>(shape.d / shape.heads));
  params.for_each_param([&](const std::string& name, Tensor<double>& t) {
    if (name.starts_with("u.")) {
      const std::size_t dh = t.cols();
      auto u = gaussian(t.shape(), 0.0, u_sigma, rng);
      auto data = u.mutable_data();
      for (std::size_t h = 0; h < t.size() / (dh * dh); ++h) {
        for (std::size_t i = 0; i < dh; ++i) data[h * dh * dh + i * dh + i] += 1.0;
      }
      t = u;
    } else if (t.rank() == 2) {
      t = gaussian(t.shape(), 0.0, w_sigma, rng);
    } else if (name.starts_with("d_") || name == "k_scale") {
      t = gaussian(t.shape(), 1.0, 0.3, rng);
    } else {
      t = gaussian(t.shape(), 0.0, 0.1, rng);
    }
  });
  return params;
}

template <typename Params>
using LossFn = std::function<Tensor<double>(const Params&)>;

template <typename Params>
void compare(GradCheckReport& report, Params params, const LossFn<Params>& loss_fn, double h) {
  Tape<double> tape;
  Params bound = params;
  bound.for_each_param([&](const std::string&, Tensor<double>& t) { t = tape.track(t); });
  const auto grads = tape.backward(loss_fn(bound));

  std::vector<Tensor<double>> analytic;
  bound.for_each_param([&](const std::string&, const Tensor<double>& t) { analytic.push_back(grads.of(t)); });

  std::size_t k = 0;
  params.for_each_param([&](const std::string& name, Tensor<double>& t) {
    GradCheckEntry entry{name, t.size(), 0.0, 0.0, 0};
    const auto a = analytic[k].data();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double original = t[i];
      t.mutable_data()[i] = original + h;
      const double plus = loss_fn(params).item();
      t.mutable_data()[i] = original - h;
      const double minus = loss_fn(params).item();
      t.mutable_data()[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double rel = relative_error(a[i], numeric);
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a[i] - numeric));
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.max_abs_error = std::max(report.max_abs_error, entry.max_abs_error);
    report.entries.push_back(std::move(entry));
    ++k;
  });
}

struct LinearParams {
  Tensor<double> w;
  template <typename F>
  void for_each_param(F&& f) {
    f(std::string("w"), w);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f(std::string("w"), w);
  }
};

}  // namespace

GradCheckReport grad_check(AttentionVariant variant, const GradCheckShape& shape, std::uint64_t seed, double h) {
  shape.validate();
  Rng rng(seed);
  Rng param_rng = rng.split(1), data_rng = rng.split(2);
  const auto params = random_attention(variant, shape, param_rng);
  const auto x = gaussian({shape.n, shape.d}, 0.0, 1.0, data_rng);
  const auto r = gaussian({shape.n, shape.d}, 0.0, 1.0, data_rng);

  GradCheckReport report{std::string(variant_name(variant)), shape, seed, {}, 0.0, 0.0};
  compare<AttentionParams<double>>(
      report, params, [&](const AttentionParams<double>& p) { return sum(mul(attend(p, x).output, r)); }, h);
  return report;
}

GradCheckReport linear_grad_check(std::uint64_t seed, double h) {
  const GradCheckShape shape{4, 6, 1, false};
  Rng rng(seed);
  const auto x = gaussian({shape.n, shape.d}, 0.0, 1.0, rng);
  const auto r = gaussian({shape.n, 3}, 0.0, 1.0, rng);
  const LinearParams params{gaussian({shape.d, 3}, 0.0, 1.0, rng)};

  GradCheckReport report{"linear", shape, seed, {}, 0.0, 0.0};
  compare<LinearParams>(report, params, [&](const LinearParams& p) { return sum(mul(matmul(x, p.w), r)); }, h);
  return report;
}

}  // namespace attnforge
