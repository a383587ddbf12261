#include "attnforge/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "attnforge/ops.hpp"

namespace attnforge {

void ModelConfig::validate() const {
  if (d_model == 0) throw ConfigError("d_model must be positive");
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (vocab == 0) throw ConfigError("vocab must be positive");
  if (max_seq == 0) throw ConfigError("max_seq must be at least 1");
  if (!(dropout_hidden >= 0.0 && dropout_hidden < 1.0)) throw ConfigError("dropout_hidden must lie in [0, 1)");
  if (!(dropout_attn >= 0.0 && dropout_attn < 1.0)) throw ConfigError("dropout_attn must lie in [0, 1)");
  variant_name(variant);  // rejects out-of-range enum values
}

ModelConfig ModelConfig::bert_base(AttentionVariant variant) {
  return ModelConfig{.layers = 12,
                     .d_model = 768,
                     .heads = 12,
                     .vocab = 30522,
                     .max_seq = 512,
                     .ffn_width = 3072,
                     .variant = variant,
                     .bias = false,
                     .dropout_hidden = 0.1,
                     .dropout_attn = 0.1,
                     .num_classes = 0};
}

ModelConfig ModelConfig::tiny(AttentionVariant variant) {
  return ModelConfig{.layers = 2,
                     .d_model = 32,
                     .heads = 4,
                     .vocab = 64,
                     .max_seq = 16,
                     .ffn_width = 0,
                     .variant = variant,
                     .bias = false,
                     .dropout_hidden = 0.0,
                     .dropout_attn = 0.0,
                     .num_classes = 0};
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"d_model", c.d_model},
                     {"heads", c.heads},
                     {"vocab", c.vocab},
                     {"max_seq", c.max_seq},
                     {"ffn_width", c.ffn()},
                     {"variant", std::string(variant_name(c.variant))},
                     {"bias", c.bias},
                     {"dropout_hidden", c.dropout_hidden},
                     {"dropout_attn", c.dropout_attn},
                     {"num_classes", c.num_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  if (!j.contains("variant")) throw ConfigError("model config needs a \"variant\"");
  try {
    c = ModelConfig::tiny(parse_variant(j.at("variant").get<std::string>()));
    c.layers = j.value("layers", c.layers);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.vocab = j.value("vocab", c.vocab);
    c.max_seq = j.value("max_seq", c.max_seq);
    c.ffn_width = j.value("ffn_width", std::size_t{0});
    c.bias = j.value("bias", c.bias);
    c.dropout_hidden = j.value("dropout_hidden", c.dropout_hidden);
    c.dropout_attn = j.value("dropout_attn", c.dropout_attn);
    c.num_classes = j.value("num_classes", c.num_classes);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
}

template <typename T>
std::uint64_t ModelParams<T>::parameter_count() const {
  std::uint64_t total = 0;
  for_each_param([&](const std::string&, const Tensor<T>& t) { total += t.size(); });
  return total;
}

namespace {

template <typename T>
Tensor<T> normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<T> v(rows * cols);
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(0.02));
  return Tensor<T>({rows, cols}, std::move(v));
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, const ForwardOptions<T>& options) {
  if (!options.training || p <= 0.0) return x;
  if (options.rng == nullptr) throw ContractError("training-mode dropout needs an Rng");
  const T keep = static_cast<T>(1.0 - p);
  std::vector<T> m(x.size());
  for (auto& value : m) value = options.rng->uniform() < p ? T{0} : T{1} / keep;
  return mul(x, Tensor<T>(x.shape(), std::move(m)));
}

}  // namespace

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  ModelParams<T> p;
  p.config = config;
  p.token_embedding = normal_matrix<T>(config.vocab, d, rng);
  p.position_embedding = normal_matrix<T>(config.max_seq, d, rng);
  p.embed_ln_gamma = Tensor<T>::filled({d}, T{1});
  p.embed_ln_beta = Tensor<T>::zeros({d});
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderBlock<T> b;
    b.attention = init_attention<T>(config.variant, d, config.heads, config.bias, rng);
    b.ln1_gamma = Tensor<T>::filled({d}, T{1});
    b.ln1_beta = Tensor<T>::zeros({d});
    b.ffn_w1 = normal_matrix<T>(d, config.ffn(), rng);
    b.ffn_b1 = Tensor<T>::zeros({config.ffn()});
    b.ffn_w2 = normal_matrix<T>(config.ffn(), d, rng);
    b.ffn_b2 = Tensor<T>::zeros({d});
    b.ln2_gamma = Tensor<T>::filled({d}, T{1});
    b.ln2_beta = Tensor<T>::zeros({d});
    p.blocks.push_back(std::move(b));
  }
  if (config.num_classes == 0) {
    p.mlm_bias = Tensor<T>::zeros({config.vocab});
  } else {
    p.cls_weight = normal_matrix<T>(d, config.num_classes, rng);
    p.cls_bias = Tensor<T>::zeros({config.num_classes});
  }
  return p;
}

template <typename T>
ModelParams<T> track_params(const ModelParams<T>& params, Tape<T>& tape) {
  ModelParams<T> out = params;
  out.for_each_param([&](const std::string&, Tensor<T>& t) { t = tape.track(t); });
  return out;
}

template <typename T>
Tensor<T> embed(const ModelParams<T>& params, std::span<const std::int32_t> tokens) {
  const std::size_t n = tokens.size();
  if (n == 0) throw InputError("empty token sequence");
  if (n > params.config.max_seq) {
    throw InputError("sequence of " + std::to_string(n) + " tokens exceeds max_seq " +
                     std::to_string(params.config.max_seq));
  }
  std::vector<std::int32_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<std::int32_t>(i);
  auto x = add(embedding_lookup(params.token_embedding, tokens), embedding_lookup(params.position_embedding,
                                                                                  std::span<const std::int32_t>(positions)));
  return layer_norm(x, params.embed_ln_gamma, params.embed_ln_beta);
}

template <typename T>
Tensor<T> encoder_block(const EncoderBlock<T>& block, const Tensor<T>& x, const ModelConfig& config,
                        const ForwardOptions<T>& options) {
  AttendOptions attn;
  attn.key_mask = options.key_mask;
  if (options.training && config.dropout_attn > 0.0) {
    attn.dropout = config.dropout_attn;
    attn.rng = options.rng;
  }
  auto a = attend(block.attention, x, attn).output;
  auto h = layer_norm(add(x, dropout(a, config.dropout_hidden, options)), block.ln1_gamma, block.ln1_beta);
  auto f = add_row(matmul(gelu(add_row(matmul(h, block.ffn_w1), block.ffn_b1)), block.ffn_w2), block.ffn_b2);
  return layer_norm(add(h, dropout(f, config.dropout_hidden, options)), block.ln2_gamma, block.ln2_beta);
}

template <typename T>
Tensor<T> forward(const ModelParams<T>& params, std::span<const std::int32_t> tokens, const ForwardOptions<T>& options) {
  auto x = embed(params, tokens);
  if (options.embedding_hook) x = options.embedding_hook(x);
  x = dropout(x, params.config.dropout_hidden, options);
  for (const auto& block : params.blocks) x = encoder_block(block, x, params.config, options);
  return x;
}

template <typename T>
Tensor<T> mlm_logits(const ModelParams<T>& params, const Tensor<T>& hidden) {
  if (!params.mlm_bias) throw ContractError("model has a classifier head, not an MLM head");
  return add_row(matmul(hidden, transpose(params.token_embedding)), *params.mlm_bias);
}

std::vector<std::size_t> choose_mask_positions(std::size_t n, double mask_ratio, Rng& rng) {
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw InputError("mask ratio must lie strictly between 0 and 1");
  if (n == 0) throw InputError("sequence too short to mask a token");
  // The epsilon keeps e.g. 0.15·20 from rounding up to 4.
  const auto count = std::min(n, static_cast<std::size_t>(std::ceil(mask_ratio * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

template <typename T>
Tensor<T> mlm_loss_at(const ModelParams<T>& params, std::span<const std::int32_t> tokens,
                      std::span<const std::size_t> positions, const ForwardOptions<T>& options) {
  if (positions.empty()) throw InputError("no masked positions");
  std::vector<std::int32_t> input(tokens.begin(), tokens.end());
  std::vector<std::int32_t> targets(tokens.size(), -1);
  for (auto pos : positions) {
    if (pos >= tokens.size()) throw InputError("mask position " + std::to_string(pos) + " is out of range");
    targets[pos] = tokens[pos];
    input[pos] = kMaskToken;
  }
  const auto hidden = forward(params, std::span<const std::int32_t>(input), options);
  return cross_entropy_with_logits(mlm_logits(params, hidden), std::span<const std::int32_t>(targets));
}

template <typename T>
Tensor<T> mlm_loss(const ModelParams<T>& params, std::span<const std::int32_t> tokens, double mask_ratio, Rng& rng,
                   const ForwardOptions<T>& options) {
  const auto positions = choose_mask_positions(tokens.size(), mask_ratio, rng);
  return mlm_loss_at(params, tokens, std::span<const std::size_t>(positions), options);
}

template <typename T>
Tensor<T> classify_logits(const ModelParams<T>& params, std::span<const std::int32_t> tokens,
                          const ForwardOptions<T>& options) {
  if (!params.cls_weight || !params.cls_bias) throw ContractError("model has no classifier head");
  const auto pooled = mean_rows(forward(params, tokens, options));
  return add_row(matmul(pooled, *params.cls_weight), *params.cls_bias);
}

template <typename T>
ModelParams<T> to_standard(const ModelParams<T>& params) {
  ModelParams<T> out = params;
  out.config.variant = AttentionVariant::Standard;
  for (auto& block : out.blocks) block.attention = to_standard(block.attention);
  return out;
}

#define ATTNFORGE_INSTANTIATE_ENCODER(T)                                                                        \
  template struct ModelParams<T>;                                                                              \
  template ModelParams<T> init_model<T>(const ModelConfig&, Rng&);                                             \
  template ModelParams<T> track_params(const ModelParams<T>&, Tape<T>&);                                       \
  template Tensor<T> embed(const ModelParams<T>&, std::span<const std::int32_t>);                              \
  template Tensor<T> encoder_block(const EncoderBlock<T>&, const Tensor<T>&, const ModelConfig&,              \
                                   const ForwardOptions<T>&);                                                  \
  template Tensor<T> forward(const ModelParams<T>&, std::span<const std::int32_t>, const ForwardOptions<T>&);  \
  template Tensor<T> mlm_logits(const ModelParams<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mlm_loss(const ModelParams<T>&, std::span<const std::int32_t>, double, Rng&,              \
                              const ForwardOptions<T>&);                                                       \
  template Tensor<T> mlm_loss_at(const ModelParams<T>&, std::span<const std::int32_t>,                         \
                                 std::span<const std::size_t>, const ForwardOptions<T>&);                      \
  template Tensor<T> classify_logits(const ModelParams<T>&, std::span<const std::int32_t>,                     \
                                     const ForwardOptions<T>&);                                                \
  template ModelParams<T> to_standard(const ModelParams<T>&);

ATTNFORGE_INSTANTIATE_ENCODER(float)
ATTNFORGE_INSTANTIATE_ENCODER(double)

#undef ATTNFORGE_INSTANTIATE_ENCODER

}  // namespace attnforge
