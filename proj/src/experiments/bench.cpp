#include "attnforge/experiments/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "attnforge/audit.hpp"
#include "attnforge/encoder.hpp"
#include "attnforge/errors.hpp"
#include "attnforge/ops.hpp"

namespace attnforge {

std::string_view precision_name(Precision p) { return p == Precision::Float ? "float" : "double"; }

Precision parse_precision(std::string_view name) {
  if (name == "float" || name == "f32") return Precision::Float;
  if (name == "double" || name == "f64") return Precision::Double;
  throw ConfigError("unknown precision '" + std::string(name) + "' (expected float or double)");
}

void BenchShape::validate() const {
  if (d == 0 || n == 0 || batch == 0 || heads == 0) throw ConfigError("bench shape entries must be positive");
  if (d % heads != 0) throw ConfigError("bench heads must divide d");
}

void BenchOptions::validate() const {
  shape.validate();
  if (trials < 1) throw ConfigError("bench needs at least one timed trial");
}

nlohmann::json to_json(const BenchResult& r) {
  return {{"variant", std::string(variant_name(r.variant))},
          {"d", r.shape.d},
          {"n", r.shape.n},
          {"batch", r.shape.batch},
          {"heads", r.shape.heads},
          {"ffn", r.shape.ffn == 0 ? 4 * r.shape.d : r.shape.ffn},
          {"precision", std::string(precision_name(r.precision))},
          {"trials", r.samples_ms.size()},
          {"mean_ms", r.mean_ms},
          {"std_ms", r.std_ms},
          {"samples_ms", r.samples_ms},
          {"projection_macs_per_token", r.projection_macs_per_token},
          {"mac_ratio_vs_standard", r.mac_ratio_vs_standard},
          {"speedup_vs_standard", r.speedup_vs_standard}};
}

namespace {

template <typename T>
struct Subject {
  ModelConfig config;
  EncoderBlock<T> block;
};

template <typename T>
double time_step(const Subject<T>& s, const std::vector<Tensor<T>>& inputs, const Tensor<T>& r) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& x : inputs) {
    Tape<T> tape;
    EncoderBlock<T> bound = s.block;
    EncoderBlock<T>::visit(bound, "", [&](const std::string&, Tensor<T>& t) { t = tape.track(t); });
    const auto out = encoder_block(bound, tape.track(x), s.config);
    tape.backward(sum(mul(out, r)));
  }
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

template <typename T>
Tensor<T> random_input(const BenchShape& shape, Rng& rng) {
  std::vector<T> v(shape.n * shape.d);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return Tensor<T>({shape.n, shape.d}, std::move(v));
}

template <typename T>
std::vector<BenchResult> run(const BenchOptions& options, const std::vector<AttentionVariant>& variants) {
  const auto& shape = options.shape;
  const Rng root(options.seed);
  Rng data_rng = root.split(1);
  std::vector<Tensor<T>> inputs;
  for (std::size_t b = 0; b < shape.batch; ++b) inputs.push_back(random_input<T>(shape, data_rng));
  const auto r = random_input<T>(shape, data_rng);

  std::vector<Subject<T>> subjects;
  for (auto v : variants) {
    ModelConfig config;
    config.layers = 1;
    config.d_model = shape.d;
    config.heads = shape.heads;
    config.vocab = kFirstDataToken + 2;
    config.max_seq = shape.n;
    config.ffn_width = shape.ffn;
    config.variant = v;
    Rng init_rng = root.split(2);  // same stream for every variant
    auto model = init_model<T>(config, init_rng);
    subjects.push_back({config, std::move(model.blocks.front())});
  }

  std::vector<std::vector<double>> samples(variants.size());
  for (std::size_t trial = 0; trial < options.warmup + options.trials; ++trial) {
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const double ms = time_step(subjects[i], inputs, r);
      if (trial >= options.warmup) samples[i].push_back(ms);
    }
  }

  const auto standard_macs = macs_per_token(AttentionVariant::Standard, shape.d, shape.heads);
  std::vector<BenchResult> out;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    BenchResult res;
    res.variant = variants[i];
    res.shape = shape;
    res.precision = options.precision;
    res.samples_ms = samples[i];
    const double k = static_cast<double>(samples[i].size());
    res.mean_ms = std::accumulate(samples[i].begin(), samples[i].end(), 0.0) / k;
    double sq = 0.0;
    for (double s : samples[i]) sq += (s - res.mean_ms) * (s - res.mean_ms);
    res.std_ms = k > 1 ? std::sqrt(sq / (k - 1)) : 0.0;
    res.projection_macs_per_token = macs_per_token(variants[i], shape.d, shape.heads);
    res.mac_ratio_vs_standard =
        static_cast<double>(res.projection_macs_per_token) / static_cast<double>(standard_macs);
    out.push_back(std::move(res));
  }
  const double baseline = out.front().mean_ms;  // Standard comes first
  for (auto& res : out) res.speedup_vs_standard = baseline / res.mean_ms;
  return out;
}

}  // namespace

std::vector<BenchResult> bench(const BenchOptions& options) {
  options.validate();
  std::vector<AttentionVariant> variants{AttentionVariant::Standard};
  for (auto v : options.variants) {
    if (std::find(variants.begin(), variants.end(), v) == variants.end()) variants.push_back(v);
  }
  return options.precision == Precision::Float ? run<float>(options, variants) : run<double>(options, variants);
}

}  // namespace attnforge
