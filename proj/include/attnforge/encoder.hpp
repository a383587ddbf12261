#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnforge/attention.hpp"
#include "attnforge/rng.hpp"
#include "attnforge/tensor.hpp"

namespace attnforge {

/// Reserved token ids shared by the toy tokenizer and the synthetic tasks.
inline constexpr std::int32_t kMaskToken = 0;
inline constexpr std::int32_t kPadToken = 1;
inline constexpr std::int32_t kFirstDataToken = 2;

/// Encoder hyperparameters. `variant` has no default; use a preset or set it.
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t vocab = 64;
  std::size_t max_seq = 16;
  std::size_t ffn_width = 0;  // 0 means 4·d_model
  AttentionVariant variant;
  bool bias = false;
  double dropout_hidden = 0.0;
  double dropout_attn = 0.0;
  std::size_t num_classes = 0;  // 0: tied MLM head; otherwise a classifier head

  std::size_t ffn() const { return ffn_width == 0 ? 4 * d_model : ffn_width; }
  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// 12 layers, width 768, 12 heads, 30522-token vocabulary, 512 positions,
  /// dropout 0.1.
  static ModelConfig bert_base(AttentionVariant variant);
  static ModelConfig tiny(AttentionVariant variant);

  /// Compares the resolved FFN width, so 0 and 4·d_model are the same config.
  bool operator==(const ModelConfig& o) const {
    return layers == o.layers && d_model == o.d_model && heads == o.heads && vocab == o.vocab &&
           max_seq == o.max_seq && ffn() == o.ffn() && variant == o.variant && bias == o.bias &&
           dropout_hidden == o.dropout_hidden && dropout_attn == o.dropout_attn && num_classes == o.num_classes;
  }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Missing keys fall back to tiny() defaults, except "variant" which is required.
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct EncoderBlock {
  AttentionParams<T> attention;
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor<T> ln2_gamma, ln2_beta;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    self.attention.for_each_param([&](const std::string& name, auto& t) { f(prefix + "attention." + name, t); });
    f(prefix + "ln1.gamma", self.ln1_gamma);
    f(prefix + "ln1.beta", self.ln1_beta);
    f(prefix + "ffn.w1", self.ffn_w1);
    f(prefix + "ffn.b1", self.ffn_b1);
    f(prefix + "ffn.w2", self.ffn_w2);
    f(prefix + "ffn.b2", self.ffn_b2);
    f(prefix + "ln2.gamma", self.ln2_gamma);
    f(prefix + "ln2.beta", self.ln2_beta);
  }
};

/// All learnables of an encoder. The MLM head reuses token_embedding as its
/// output matrix, so only its bias is a separate parameter.
template <typename T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> token_embedding;     // [V×d]
  Tensor<T> position_embedding;  // [n_max×d]
  Tensor<T> embed_ln_gamma, embed_ln_beta;
  std::vector<EncoderBlock<T>> blocks;
  std::optional<Tensor<T>> mlm_bias;                  // [V]
  std::optional<Tensor<T>> cls_weight, cls_bias;      // [d×C], [C]
  std::uint64_t trained_steps = 0;

  /// f(const std::string& name, Tensor&) in deterministic declaration order.
  template <typename F>
  void for_each_param(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    visit_all(*this, f);
  }

  /// Runtime enumeration of learnable scalars.
  std::uint64_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& self, F& f) {
    f(std::string("embeddings.token"), self.token_embedding);
    f(std::string("embeddings.position"), self.position_embedding);
    f(std::string("embeddings.ln.gamma"), self.embed_ln_gamma);
    f(std::string("embeddings.ln.beta"), self.embed_ln_beta);
    for (std::size_t l = 0; l < self.blocks.size(); ++l) {
      EncoderBlock<T>::visit(self.blocks[l], "layers." + std::to_string(l) + ".", f);
    }
    if (self.mlm_bias) f(std::string("mlm.bias"), *self.mlm_bias);
    if (self.cls_weight) f(std::string("cls.weight"), *self.cls_weight);
    if (self.cls_bias) f(std::string("cls.bias"), *self.cls_bias);
  }
};

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, Rng& rng);

/// Copy of `params` whose every learnable is tracked on `tape`.
template <typename T>
ModelParams<T> track_params(const ModelParams<T>& params, Tape<T>& tape);

/// Per-call switches. Dropout runs only when `training` is set.
template <typename T>
struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;
  /// key_mask[j] == false marks position j as padding.
  std::vector<bool> key_mask;
  /// Applied to the embedding output, before the first block.
  std::function<Tensor<T>(const Tensor<T>&)> embedding_hook;
};

/// Token + position embeddings followed by the embedding layer norm.
template <typename T>
Tensor<T> embed(const ModelParams<T>& params, std::span<const std::int32_t> tokens);

/// One post-LN block: x ← LN(x + Attn(x)); x ← LN(x + FFN(x)).
template <typename T>
Tensor<T> encoder_block(const EncoderBlock<T>& block, const Tensor<T>& x, const ModelConfig& config,
                        const ForwardOptions<T>& options = {});

/// Final hidden states [n×d].
template <typename T>
Tensor<T> forward(const ModelParams<T>& params, std::span<const std::int32_t> tokens,
                  const ForwardOptions<T>& options = {});

/// Vocabulary logits [n×V] through the tied MLM head.
template <typename T>
Tensor<T> mlm_logits(const ModelParams<T>& params, const Tensor<T>& hidden);

/// Positions masked by mlm_loss: ⌈ratio·n⌉ distinct indices, sorted.
std::vector<std::size_t> choose_mask_positions(std::size_t n, double mask_ratio, Rng& rng);

/// Masks ⌈ratio·n⌉ positions with kMaskToken and returns the mean
/// cross-entropy over those positions.
template <typename T>
Tensor<T> mlm_loss(const ModelParams<T>& params, std::span<const std::int32_t> tokens, double mask_ratio, Rng& rng,
                   const ForwardOptions<T>& options = {});

/// Same loss with the masked positions given explicitly.
template <typename T>
Tensor<T> mlm_loss_at(const ModelParams<T>& params, std::span<const std::int32_t> tokens,
                      std::span<const std::size_t> positions, const ForwardOptions<T>& options = {});

/// Class logits [1×C] from mean-pooled hidden states.
template <typename T>
Tensor<T> classify_logits(const ModelParams<T>& params, std::span<const std::int32_t> tokens,
                          const ForwardOptions<T>& options = {});

/// Same model with every attention layer rewritten as Standard attention.
template <typename T>
ModelParams<T> to_standard(const ModelParams<T>& params);

}  // namespace attnforge
