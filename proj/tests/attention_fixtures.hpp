#pragma once

#include <string>

#include "attnforge/attention.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace attnforge;

inline oracle::Mat values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

/// Parameters with every entry O(1) so that no path is negligible.
inline AttentionParams<double> random_attention(AttentionVariant v, std::size_t d, std::size_t heads, bool bias,
                                                Rng& rng) {
  auto p = init_attention<double>(v, d, heads, bias, rng);
  const double w = 1.0 / std::sqrt(static_cast<double>(d));
  p.for_each_param([&](const std::string& name, Tensor<double>& t) {
    const auto n = t.size();
    if (name.starts_with("u.")) {
      auto u = oracle::gaussian(n, rng, 0.0, 0.3);
      for (std::size_t i = 0; i < t.rows(); ++i) u[i * t.rows() + i] += 1.0;
      t = Tensor<double>(t.shape(), u);
    } else if (t.rank() == 2) {
      t = Tensor<double>(t.shape(), oracle::gaussian(n, rng, 0.0, w));
    } else if (name.starts_with("d_") || name == "k_scale") {
      t = Tensor<double>(t.shape(), oracle::gaussian(n, rng, 1.0, 0.5));
    } else {
      t = Tensor<double>(t.shape(), oracle::gaussian(n, rng, 0.0, 0.2));
    }
  });
  return p;
}

inline std::vector<double> scaled(const std::optional<Tensor<double>>& b, const Tensor<double>* s) {
  if (!b) return {};
  auto out = values(*b);
  if (s) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] *= (*s)[j];
  }
  return out;
}

/// Explicit role matrices of any variant, built with plain loops.
inline oracle::Explicit explicit_form(const AttentionParams<double>& p) {
  oracle::Explicit e;
  e.d = p.width();
  e.heads = p.heads;
  e.wo = values(p.w_o);
  e.bo = p.b_o ? values(*p.b_o) : std::vector<double>{};
  const std::size_t d = e.d;
  std::visit(
      [&](const auto& pr) {
        using P = std::remove_cvref_t<decltype(pr)>;
        if constexpr (std::is_same_v<P, StandardProjection<double>>) {
          e.wq = values(pr.w_q), e.wk = values(pr.w_k), e.wv = values(pr.w_v);
          e.bq = scaled(pr.b_q, nullptr), e.bk = scaled(pr.b_k, nullptr), e.bv = scaled(pr.b_v, nullptr);
        } else if constexpr (std::is_same_v<P, SymmetricProjection<double>>) {
          e.wq = e.wk = values(pr.w_qk), e.wv = values(pr.w_v);
          e.bq = e.bk = scaled(pr.b_qk, nullptr), e.bv = scaled(pr.b_v, nullptr);
        } else if constexpr (std::is_same_v<P, PairwiseProjection<double>>) {
          e.wq = e.wk = values(pr.w_qk), e.wv = values(pr.w_v);
          e.bq = e.bk = scaled(pr.b_qk, nullptr), e.bv = scaled(pr.b_v, nullptr);
          for (const auto& u : pr.u) e.u.push_back(values(u));
        } else if constexpr (std::is_same_v<P, PartialQKProjection<double>>) {
          const auto ks = values(pr.k_scale);
          e.wq = values(pr.w_qk), e.wk = oracle::times_diag(values(pr.w_qk), ks, d), e.wv = values(pr.w_v);
          e.bq = scaled(pr.b_qk, nullptr), e.bk = scaled(pr.b_qk, &pr.k_scale), e.bv = scaled(pr.b_v, nullptr);
        } else {
          const auto ws = values(pr.w_s);
          e.wq = oracle::times_diag(ws, values(pr.d_q), d);
          e.wk = oracle::times_diag(ws, values(pr.d_k), d);
          e.wv = oracle::times_diag(ws, values(pr.d_v), d);
          e.bq = scaled(pr.b_s, &pr.d_q), e.bk = scaled(pr.b_s, &pr.d_k), e.bv = scaled(pr.b_s, &pr.d_v);
        }
      },
      p.projection);
  return e;
}

/// Standard parameters whose role matrices are given explicitly.
inline AttentionParams<double> standard_from(const oracle::Explicit& e) {
  const std::size_t d = e.d;
  auto mat = [&](const oracle::Mat& m) { return Tensor<double>({d, d}, m); };
  auto vec = [&](const std::vector<double>& b) -> std::optional<Tensor<double>> {
    if (b.empty()) return std::nullopt;
    return Tensor<double>({d}, b);
  };
  AttentionParams<double> p;
  p.heads = e.heads;
  p.projection = StandardProjection<double>{mat(e.wq), mat(e.wk), mat(e.wv), vec(e.bq), vec(e.bk), vec(e.bv)};
  p.w_o = mat(e.wo);
  p.b_o = vec(e.bo);
  return p;
}

}  // namespace fixtures
