#include "attnforge/attention.hpp"

#include <cmath>
#include <limits>

#include "attnforge/ops.hpp"

namespace attnforge {

std::string_view variant_name(AttentionVariant variant) {
  switch (variant) {
    case AttentionVariant::Standard: return "standard";
    case AttentionVariant::Symmetric: return "symmetric";
    case AttentionVariant::Pairwise: return "pairwise";
    case AttentionVariant::PartialQK: return "partial-qk";
    case AttentionVariant::SharedQKV: return "shared-qkv";
  }
  throw ContractError("unknown attention variant");
}

AttentionVariant parse_variant(std::string_view name) {
  if (name == "standard") return AttentionVariant::Standard;
  if (name == "symmetric") return AttentionVariant::Symmetric;
  if (name == "pairwise") return AttentionVariant::Pairwise;
  if (name == "partial-qk" || name == "partialqk" || name == "partial_qk") return AttentionVariant::PartialQK;
  if (name == "shared-qkv" || name == "sharedqkv" || name == "shared_qkv" || name == "shared") {
    return AttentionVariant::SharedQKV;
  }
  throw ConfigError("unknown attention variant '" + std::string(name) +
                    "' (expected standard, symmetric, pairwise, partial-qk or shared-qkv)");
}

namespace {

void check_heads(std::uint64_t d, std::uint64_t heads) {
  if (heads == 0 || d == 0 || d % heads != 0) {
    throw ConfigError("model width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

}  // namespace

std::uint64_t count_projection_params(AttentionVariant variant, std::uint64_t d, std::uint64_t heads, bool bias) {
  check_heads(d, heads);
  const std::uint64_t d2 = d * d;
  const std::uint64_t b = bias ? 1 : 0;
  switch (variant) {
    case AttentionVariant::Standard: return 3 * d2 + b * 3 * d;
    case AttentionVariant::Symmetric: return 2 * d2 + b * 2 * d;
    case AttentionVariant::Pairwise: return 2 * d2 + d2 / heads + b * 2 * d;
    case AttentionVariant::PartialQK: return 2 * d2 + d + b * 2 * d;
    case AttentionVariant::SharedQKV: return d2 + 3 * d + b * d;
  }
  throw ContractError("unknown attention variant");
}

template <typename T>
std::uint64_t projection_param_count(const AttentionParams<T>& params) {
  std::uint64_t total = 0;
  params.for_each_param([&](const std::string& name, const Tensor<T>& t) {
    if (name != "w_o" && name != "b_o") total += t.size();
  });
  return total;
}

namespace {

template <typename T>
Tensor<T> random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<T> v(rows * cols);
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(0.02));
  return Tensor<T>({rows, cols}, std::move(v));
}

template <typename T>
Tensor<T> jittered_ones(std::size_t d, Rng& rng) {
  std::vector<T> v(d);
  for (auto& x : v) x = static_cast<T>(1.0 + 0.02 * rng.normal());
  return Tensor<T>({d}, std::move(v));
}

template <typename T>
std::optional<Tensor<T>> maybe_bias(bool bias, std::size_t d) {
  if (!bias) return std::nullopt;
  return Tensor<T>::zeros({d});
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const std::optional<Tensor<T>>& b) {
  auto y = matmul(x, w);
  return b ? add_row(y, *b) : y;
}

}  // namespace

template <typename T>
AttentionParams<T> init_attention(AttentionVariant variant, std::size_t d, std::size_t heads, bool bias, Rng& rng) {
  check_heads(d, heads);
  AttentionParams<T> p;
  p.heads = heads;
  switch (variant) {
    case AttentionVariant::Standard: {
      StandardProjection<T> s;
      s.w_q = random_matrix<T>(d, d, rng);
      s.w_k = random_matrix<T>(d, d, rng);
      s.w_v = random_matrix<T>(d, d, rng);
      s.b_q = maybe_bias<T>(bias, d);
      s.b_k = maybe_bias<T>(bias, d);
      s.b_v = maybe_bias<T>(bias, d);
      p.projection = std::move(s);
      break;
    }
    case AttentionVariant::Symmetric: {
      SymmetricProjection<T> s;
      s.w_qk = random_matrix<T>(d, d, rng);
      s.w_v = random_matrix<T>(d, d, rng);
      s.b_qk = maybe_bias<T>(bias, d);
      s.b_v = maybe_bias<T>(bias, d);
      p.projection = std::move(s);
      break;
    }
    case AttentionVariant::Pairwise: {
      PairwiseProjection<T> s;
      s.w_qk = random_matrix<T>(d, d, rng);
      s.w_v = random_matrix<T>(d, d, rng);
      const std::size_t dh = d / heads;
      for (std::size_t h = 0; h < heads; ++h) {
        std::vector<T> u(dh * dh);
        for (std::size_t i = 0; i < dh; ++i) {
          for (std::size_t j = 0; j < dh; ++j) u[i * dh + j] = static_cast<T>((i == j ? 1.0 : 0.0) + 0.02 * rng.normal());
        }
        s.u.emplace_back(Shape{dh, dh}, std::move(u));
      }
      s.b_qk = maybe_bias<T>(bias, d);
      s.b_v = maybe_bias<T>(bias, d);
      p.projection = std::move(s);
      break;
    }
    case AttentionVariant::PartialQK: {
      PartialQKProjection<T> s;
      s.w_qk = random_matrix<T>(d, d, rng);
      s.w_v = random_matrix<T>(d, d, rng);
      s.k_scale = jittered_ones<T>(d, rng);
      s.b_qk = maybe_bias<T>(bias, d);
      s.b_v = maybe_bias<T>(bias, d);
      p.projection = std::move(s);
      break;
    }
    case AttentionVariant::SharedQKV: {
      SharedQKVProjection<T> s;
      s.w_s = random_matrix<T>(d, d, rng);
      s.d_q = jittered_ones<T>(d, rng);
      s.d_k = jittered_ones<T>(d, rng);
      s.d_v = jittered_ones<T>(d, rng);
      s.b_s = maybe_bias<T>(bias, d);
      p.projection = std::move(s);
      break;
    }
  }
  p.w_o = random_matrix<T>(d, d, rng);
  p.b_o = maybe_bias<T>(bias, d);
  return p;
}

template <typename T>
Projected<T> project(const AttentionParams<T>& params, const Tensor<T>& x) {
  const std::size_t d = params.width();
  if (x.rank() != 2 || x.cols() != d) {
    throw DimensionError("attention input " + to_string(x.shape()) + " does not match model width " + std::to_string(d));
  }
  return std::visit(
      [&](const auto& p) -> Projected<T> {
        using P = std::remove_cvref_t<decltype(p)>;
        if constexpr (std::is_same_v<P, StandardProjection<T>>) {
          return {linear(x, p.w_q, p.b_q), linear(x, p.w_k, p.b_k), linear(x, p.w_v, p.b_v)};
        } else if constexpr (std::is_same_v<P, SymmetricProjection<T>> || std::is_same_v<P, PairwiseProjection<T>>) {
          auto qk = linear(x, p.w_qk, p.b_qk);
          return {qk, qk, linear(x, p.w_v, p.b_v)};
        } else if constexpr (std::is_same_v<P, PartialQKProjection<T>>) {
          auto q = linear(x, p.w_qk, p.b_qk);
          return {q, diag_scale(q, p.k_scale), linear(x, p.w_v, p.b_v)};
        } else {
          auto s = linear(x, p.w_s, p.b_s);
          return {diag_scale(s, p.d_q), diag_scale(s, p.d_k), diag_scale(s, p.d_v)};
        }
      },
      params.projection);
}

template <typename T>
Tensor<T> scores(AttentionVariant variant, const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>* u_head,
                 const Tensor<T>* additive_mask) {
  if (q.shape() != k.shape() || q.rank() != 2) {
    throw DimensionError("scores: query " + to_string(q.shape()) + " and key " + to_string(k.shape()) +
                         " must be matrices of equal shape");
  }
  const bool pairwise = variant == AttentionVariant::Pairwise;
  if (pairwise && u_head == nullptr) throw ContractError("scores: pairwise attention needs a U matrix");
  if (!pairwise && u_head != nullptr) {
    throw ContractError("scores: U matrix given to " + std::string(variant_name(variant)) + " attention");
  }
  const auto dh = q.cols();
  const auto left = pairwise ? matmul(q, *u_head) : q;
  auto logits = scale(matmul(left, transpose(k)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  if (additive_mask) logits = add(logits, *additive_mask);
  return softmax_rows(logits);
}

template <typename T>
AttentionOutput<T> attend(const AttentionParams<T>& params, const Tensor<T>& x, const AttendOptions& options) {
  const std::size_t d = params.width();
  const std::size_t heads = params.heads;
  check_heads(d, heads);
  if (x.rank() != 2 || x.rows() == 0) throw InputError("attention needs at least one token");
  const std::size_t n = x.rows();
  const std::size_t dh = d / heads;
  const auto qkv = project(params, x);

  std::optional<Tensor<T>> mask;
  if (!options.key_mask.empty()) {
    if (options.key_mask.size() != n) {
      throw DimensionError("key mask has " + std::to_string(options.key_mask.size()) + " entries for " +
                           std::to_string(n) + " tokens");
    }
    std::vector<T> m(n * n, T{0});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!options.key_mask[j]) m[i * n + j] = -std::numeric_limits<T>::infinity();
      }
    }
    mask = Tensor<T>({n, n}, std::move(m));
  }
  if (options.dropout > 0.0 && options.rng == nullptr) throw ContractError("attention dropout needs an Rng");

  const auto* pairwise = std::get_if<PairwiseProjection<T>>(&params.projection);
  std::vector<Tensor<T>> head_out;
  std::vector<T> weights;
  if (options.return_weights) weights.reserve(heads * n * n);
  for (std::size_t h = 0; h < heads; ++h) {
    const bool whole = heads == 1;
    auto qh = whole ? qkv.q : slice_cols(qkv.q, h * dh, dh);
    auto kh = whole ? qkv.k : slice_cols(qkv.k, h * dh, dh);
    auto vh = whole ? qkv.v : slice_cols(qkv.v, h * dh, dh);
    auto probs = scores(params.variant(), qh, kh, pairwise ? &pairwise->u[h] : nullptr, mask ? &*mask : nullptr);
    if (options.return_weights) weights.insert(weights.end(), probs.data().begin(), probs.data().end());
    if (options.dropout > 0.0) {
      const T keep = static_cast<T>(1.0 - options.dropout);
      std::vector<T> m(n * n);
      for (auto& value : m) value = options.rng->uniform() < options.dropout ? T{0} : T{1} / keep;
      probs = mul(probs, Tensor<T>({n, n}, std::move(m)));
    }
    head_out.push_back(matmul(probs, vh));
  }
  auto context = heads == 1 ? head_out.front() : concat_cols(head_out);
  AttentionOutput<T> out{linear(context, params.w_o, params.b_o), context, std::nullopt};
  if (options.return_weights) out.weights = Tensor<T>({heads, n, n}, std::move(weights));
  return out;
}

namespace {

template <typename T>
Tensor<T> column_scaled(const Tensor<T>& w, const Tensor<T>& diag) {
  return diag_scale(w.detached(), diag.detached());
}

template <typename T>
std::optional<Tensor<T>> scaled_bias(const std::optional<Tensor<T>>& b, const Tensor<T>& diag) {
  if (!b) return std::nullopt;
  std::vector<T> v(b->size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = (*b)[j] * diag[j];
  return Tensor<T>(b->shape(), std::move(v));
}

/// Block-diagonal matrix with the per-head U blocks.
template <typename T>
Tensor<T> block_diagonal(const std::vector<Tensor<T>>& blocks, std::size_t d) {
  std::vector<T> m(d * d, T{0});
  std::size_t off = 0;
  for (const auto& b : blocks) {
    const std::size_t dh = b.rows();
    for (std::size_t i = 0; i < dh; ++i) {
      for (std::size_t j = 0; j < dh; ++j) m[(off + i) * d + off + j] = b(i, j);
    }
    off += dh;
  }
  return Tensor<T>({d, d}, std::move(m));
}

}  // namespace

template <typename T>
AttentionParams<T> to_standard(const AttentionParams<T>& params) {
  AttentionParams<T> out;
  out.heads = params.heads;
  out.w_o = params.w_o.detached();
  out.b_o = params.b_o;
  if (out.b_o) out.b_o = out.b_o->detached();
  StandardProjection<T> s;
  std::visit(
      [&](const auto& p) {
        using P = std::remove_cvref_t<decltype(p)>;
        if constexpr (std::is_same_v<P, StandardProjection<T>>) {
          s = p;
        } else if constexpr (std::is_same_v<P, SymmetricProjection<T>>) {
          s = {p.w_qk, p.w_qk, p.w_v, p.b_qk, p.b_qk, p.b_v};
        } else if constexpr (std::is_same_v<P, PairwiseProjection<T>>) {
          // (X·W + b)·U·Kᵀ per head equals (X·W·U + b·U)·Kᵀ with U block-diagonal.
          const auto u = block_diagonal(p.u, params.width());
          std::optional<Tensor<T>> b_q;
          if (p.b_qk) b_q = matmul(p.b_qk->detached().view_as({1, params.width()}), u).view_as({params.width()});
          s = {matmul(p.w_qk.detached(), u), p.w_qk, p.w_v, b_q, p.b_qk, p.b_v};
        } else if constexpr (std::is_same_v<P, PartialQKProjection<T>>) {
          s = {p.w_qk, column_scaled(p.w_qk, p.k_scale), p.w_v, p.b_qk, scaled_bias(p.b_qk, p.k_scale), p.b_v};
        } else {
          s = {column_scaled(p.w_s, p.d_q), column_scaled(p.w_s, p.d_k), column_scaled(p.w_s, p.d_v),
               scaled_bias(p.b_s, p.d_q), scaled_bias(p.b_s, p.d_k), scaled_bias(p.b_s, p.d_v)};
        }
      },
      params.projection);
  StandardProjection<T>::visit(s, [](const std::string&, Tensor<T>& t) { t = t.detached(); });
  out.projection = std::move(s);
  return out;
}

#define ATTNFORGE_INSTANTIATE_ATTENTION(T)                                                                      \
  template std::uint64_t projection_param_count(const AttentionParams<T>&);                                    \
  template AttentionParams<T> init_attention<T>(AttentionVariant, std::size_t, std::size_t, bool, Rng&);       \
  template Projected<T> project(const AttentionParams<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scores(AttentionVariant, const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,             \
                            const Tensor<T>*);                                                                  \
  template AttentionOutput<T> attend(const AttentionParams<T>&, const Tensor<T>&, const AttendOptions&);        \
  template AttentionParams<T> to_standard(const AttentionParams<T>&);

ATTNFORGE_INSTANTIATE_ATTENTION(float)
ATTNFORGE_INSTANTIATE_ATTENTION(double)

#undef ATTNFORGE_INSTANTIATE_ATTENTION

}  // namespace attnforge
