#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "attnforge/rng.hpp"
#include "attnforge/tensor.hpp"

namespace attnforge {

enum class AttentionVariant { Standard, Symmetric, Pairwise, PartialQK, SharedQKV };

inline constexpr std::array<AttentionVariant, 5> kAllVariants = {
    AttentionVariant::Standard, AttentionVariant::Symmetric, AttentionVariant::Pairwise,
    AttentionVariant::PartialQK, AttentionVariant::SharedQKV};

/// Canonical lowercase name: standard, symmetric, pairwise, partial-qk, shared-qkv.
std::string_view variant_name(AttentionVariant variant);
/// Accepts canonical names plus a few aliases ("shared", "partialqk", ...).
/// Throws ConfigError for anything else.
AttentionVariant parse_variant(std::string_view name);

// Projection parameters of each variant. Every struct exposes a static
// visit(self, f) calling f(name, Tensor&) in declaration order; that order is
// the checkpoint and optimizer order.

/// Q = X·W_q, K = X·W_k, V = X·W_v.
template <typename T>
struct StandardProjection {
  Tensor<T> w_q, w_k, w_v;
  std::optional<Tensor<T>> b_q, b_k, b_v;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("w_q", self.w_q);
    f("w_k", self.w_k);
    f("w_v", self.w_v);
    if (self.b_q) f("b_q", *self.b_q);
    if (self.b_k) f("b_k", *self.b_k);
    if (self.b_v) f("b_v", *self.b_v);
  }
};

/// Q = K = X·W_qk, V = X·W_v.
template <typename T>
struct SymmetricProjection {
  Tensor<T> w_qk, w_v;
  std::optional<Tensor<T>> b_qk, b_v;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("w_qk", self.w_qk);
    f("w_v", self.w_v);
    if (self.b_qk) f("b_qk", *self.b_qk);
    if (self.b_v) f("b_v", *self.b_v);
  }
};

/// Symmetric projections plus one bilinear (d/m)×(d/m) matrix per head,
/// applied inside the scores as Q·U·Kᵀ.
template <typename T>
struct PairwiseProjection {
  Tensor<T> w_qk, w_v;
  std::vector<Tensor<T>> u;
  std::optional<Tensor<T>> b_qk, b_v;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("w_qk", self.w_qk);
    f("w_v", self.w_v);
    for (std::size_t h = 0; h < self.u.size(); ++h) f("u." + std::to_string(h), self.u[h]);
    if (self.b_qk) f("b_qk", *self.b_qk);
    if (self.b_v) f("b_v", *self.b_v);
  }
};

/// Q = X·W_qk, K = (X·W_qk) ⊙ k_scale, V = X·W_v.
template <typename T>
struct PartialQKProjection {
  Tensor<T> w_qk, w_v, k_scale;
  std::optional<Tensor<T>> b_qk, b_v;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("w_qk", self.w_qk);
    f("w_v", self.w_v);
    f("k_scale", self.k_scale);
    if (self.b_qk) f("b_qk", *self.b_qk);
    if (self.b_v) f("b_v", *self.b_v);
  }
};

/// S = X·W_s; Q = S·Diag(d_q), K = S·Diag(d_k), V = S·Diag(d_v).
/// The single optional bias is added to S.
template <typename T>
struct SharedQKVProjection {
  Tensor<T> w_s, d_q, d_k, d_v;
  std::optional<Tensor<T>> b_s;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("w_s", self.w_s);
    f("d_q", self.d_q);
    f("d_k", self.d_k);
    f("d_v", self.d_v);
    if (self.b_s) f("b_s", *self.b_s);
  }
};

template <typename T>
using ProjectionParams = std::variant<StandardProjection<T>, SymmetricProjection<T>, PairwiseProjection<T>,
                                      PartialQKProjection<T>, SharedQKVProjection<T>>;

/// Learnables of one multi-head attention sub-layer. Heads share the
/// projection (and diagonals); splitting into heads happens after projecting.
template <typename T>
struct AttentionParams {
  ProjectionParams<T> projection;
  Tensor<T> w_o;
  std::optional<Tensor<T>> b_o;
  std::size_t heads = 1;

  AttentionVariant variant() const { return static_cast<AttentionVariant>(projection.index()); }
  std::size_t width() const { return w_o.rows(); }

  /// f(std::string name, Tensor&) over projection params, then "w_o", "b_o".
  template <typename F>
  void for_each_param(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    visit_all(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_all(Self& self, F& f) {
    std::visit(
        [&](auto& p) {
          using P = std::remove_cvref_t<decltype(p)>;
          P::visit(p, [&](const std::string& name, auto& t) { f(name, t); });
        },
        self.projection);
    f(std::string("w_o"), self.w_o);
    if (self.b_o) f(std::string("b_o"), *self.b_o);
  }
};

/// Closed-form learnable count of the QKV-projection portion (output
/// projection excluded). With bias off: 3d², 2d², 2d²+d²/m, 2d²+d, d²+3d.
std::uint64_t count_projection_params(AttentionVariant variant, std::uint64_t d, std::uint64_t heads, bool bias);

/// Runtime enumeration of the projection learnables actually held by `params`.
template <typename T>
std::uint64_t projection_param_count(const AttentionParams<T>& params);

/// Weights: truncated normal σ=0.02. Diagonals, k_scale: 1 + N(0, 0.02²).
/// U: identity + N(0, 0.02²). Biases: zero.
template <typename T>
AttentionParams<T> init_attention(AttentionVariant variant, std::size_t d, std::size_t heads, bool bias, Rng& rng);

template <typename T>
struct Projected {
  Tensor<T> q, k, v;
};

template <typename T>
Projected<T> project(const AttentionParams<T>& params, const Tensor<T>& x);

/// softmax(Q·Kᵀ/√d_h) for one head, or softmax(Q·U·Kᵀ/√d_h) for Pairwise.
/// `u_head` must be given exactly when the variant is Pairwise.
/// `additive_mask` ([n×n], entries 0 or -inf) is added before the softmax.
template <typename T>
Tensor<T> scores(AttentionVariant variant, const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>* u_head,
                 const Tensor<T>* additive_mask = nullptr);

struct AttendOptions {
  bool return_weights = false;
  /// key_mask[j] == false hides key j from every query. Empty: no mask.
  std::vector<bool> key_mask;
  /// Dropout on attention probabilities; needs `rng` when > 0.
  double dropout = 0.0;
  Rng* rng = nullptr;
};

template <typename T>
struct AttentionOutput {
  Tensor<T> output;                 // [n×d], after the output projection
  Tensor<T> context;                // [n×d], concatenated head outputs before W_o
  std::optional<Tensor<T>> weights;  // [m×n×n] probabilities, when requested
};

template <typename T>
AttentionOutput<T> attend(const AttentionParams<T>& params, const Tensor<T>& x, const AttendOptions& options = {});

/// Equivalent Standard parameters: W_q = W_s·Diag(d_q) etc. for SharedQKV,
/// W_q = W_qk·BlockDiag(U) for Pairwise, W_k = W_qk·Diag(k_scale) for PartialQK.
template <typename T>
AttentionParams<T> to_standard(const AttentionParams<T>& params);

}  // namespace attnforge
