#include <doctest.h>

#include "attnforge/audit.hpp"
#include "attnforge/errors.hpp"

using namespace attnforge;

namespace {

ModelConfig shape(AttentionVariant v, std::size_t d, std::size_t heads, std::size_t layers) {
  ModelConfig c = ModelConfig::tiny(v);
  c.d_model = d;
  c.heads = heads;
  c.layers = layers;
  c.vocab = 11;
  c.max_seq = 5;
  return c;
}

// Independent per-layer projection counts written straight from the role matrices.
std::uint64_t projection_oracle(AttentionVariant v, std::uint64_t d, std::uint64_t m) {
  switch (v) {
    case AttentionVariant::Standard: return d * d + d * d + d * d;
    case AttentionVariant::Symmetric: return d * d + d * d;
    case AttentionVariant::Pairwise: return d * d + d * d + m * (d / m) * (d / m);
    case AttentionVariant::PartialQK: return d * d + d * d + d;
    case AttentionVariant::SharedQKV: return d * d + d + d + d;
  }
  return 0;
}

}  // namespace

TEST_CASE("BERT-base projection counts") {
  const auto count = [](AttentionVariant v) { return count_projection_params(v, 768, 12, false); };
  CHECK(count(AttentionVariant::Standard) == 1'769'472);
  CHECK(count(AttentionVariant::Symmetric) == 1'179'648);
  CHECK(count(AttentionVariant::Pairwise) == 1'228'800);
  CHECK(count(AttentionVariant::PartialQK) == 1'180'416);
  CHECK(count(AttentionVariant::SharedQKV) == 592'128);
  for (auto v : kAllVariants) CHECK(count(v) == projection_oracle(v, 768, 12));
}

TEST_CASE("closed-form audit equals enumeration of built models") {
  Rng rng(3);
  for (std::size_t d : {8, 64, 768}) {
    for (std::size_t m : {1, 4, 12}) {
      if (d % m != 0) continue;
      for (std::size_t layers : {1, 2, 12}) {
        if (d == 768 && layers > 2) continue;  // memory; L only scales the per-layer terms
        for (auto v : kAllVariants) {
          for (bool bias : {false, true}) {
            auto c = shape(v, d, m, layers);
            c.bias = bias;
            if (d == 768) c.ffn_width = 16;  // keeps init cheap; the FFN term is checked at smaller d
            CAPTURE(d);
            CAPTURE(m);
            CAPTURE(layers);
            CAPTURE(variant_name(v));
            const auto a = audit(c);
            CHECK(a.total == init_model<double>(c, rng).parameter_count());
            CHECK(a.per_layer_attention_projection == count_projection_params(v, d, m, bias));
          }
        }
      }
    }
  }
}

TEST_CASE("classifier head audit") {
  auto c = shape(AttentionVariant::SharedQKV, 16, 2, 2);
  c.num_classes = 5;
  Rng rng(1);
  CHECK(audit(c).total == init_model<double>(c, rng).parameter_count());
  CHECK(audit(c).heads_lm_or_cls == 16 * 5 + 5);
}

TEST_CASE("reduction percentages") {
  const auto pct = [](AttentionVariant v, std::size_t layers) {
    return audit(shape(v, 768, 12, layers)).reduction_vs_standard_pct;
  };
  CHECK(pct(AttentionVariant::Standard, 2) == 0.0);
  CHECK(pct(AttentionVariant::Symmetric, 2) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
  const double shared = pct(AttentionVariant::SharedQKV, 1);
  CHECK(shared == doctest::Approx(100.0 * (1.0 - (768.0 * 768 + 3 * 768) / (3.0 * 768 * 768))).epsilon(1e-12));
  CHECK(shared == doctest::Approx(66.5365).epsilon(1e-6));
  CHECK(pct(AttentionVariant::SharedQKV, 2) == shared);
}

TEST_CASE("projection MACs") {
  CHECK(macs_per_token(AttentionVariant::Standard, 768, 12) == 1'769'472);
  CHECK(macs_per_token(AttentionVariant::Symmetric, 768, 12) == 1'179'648);
  CHECK(macs_per_token(AttentionVariant::SharedQKV, 1, 1) == 4);
  const double ratio = static_cast<double>(macs_per_token(AttentionVariant::Standard, 768, 12)) /
                       static_cast<double>(macs_per_token(AttentionVariant::SharedQKV, 768, 12));
  CHECK(ratio == doctest::Approx(2.98833).epsilon(1e-5));
  CHECK(bilinear_macs_per_token(AttentionVariant::Pairwise, 768, 12) == 768 * 768 / 12);
  CHECK(bilinear_macs_per_token(AttentionVariant::Standard, 768, 12) == 0);
  CHECK(shared_score_macs_per_token(128, 768) == 2 * 128 * 768);
}

TEST_CASE("BERT-base reconciliation") {
  const auto s = audit(ModelConfig::bert_base(AttentionVariant::Standard));
  const auto w = audit(ModelConfig::bert_base(AttentionVariant::SharedQKV));
  const auto r = reconcile_bert_base(s, w);
  CHECK(r.published_delta == 14'177'080);
  CHECK(r.published_reduction_pct == doctest::Approx(12.9454).epsilon(1e-5));
  CHECK(r.projection_delta == 14'128'128);
  CHECK(r.residual == 48'952);
  CHECK(r.our_total_delta == r.projection_delta);

  bool bert_standard_exact = false;
  for (const auto& it : r.items) {
    if (it.name.starts_with("bert-mlm")) bert_standard_exact |= it.standard_matches_published;
    CHECK_FALSE(it.shared_matches_published);
  }
  CHECK(bert_standard_exact);

  const std::string text = r.to_text();
  CHECK(text.find("14,177,080") != std::string::npos);
  CHECK(text.find("14,128,128") != std::string::npos);
  CHECK(text.find("48,952") != std::string::npos);
  CHECK(text.find("12.94") != std::string::npos);
  CHECK(text.find("open question") != std::string::npos);
  CHECK(r.to_json()["residual"] == 48'952);

  CHECK_THROWS_AS(reconcile_bert_base(w, s), ContractError);
  const auto small = audit(shape(AttentionVariant::Standard, 64, 4, 2));
  CHECK_THROWS_AS(reconcile_bert_base(small, w), ContractError);
}

TEST_CASE("audit table renderings") {
  std::vector<ParamAudit> rows;
  for (auto v : kAllVariants) rows.push_back(audit(ModelConfig::bert_base(v)));
  const auto csv = audit_table_csv(rows);
  CHECK(csv.find("66.5365") != std::string::npos);
  CHECK(csv.find("\r\n") != std::string::npos);
  CHECK(audit_table_text(rows).find("shared-qkv") != std::string::npos);
  CHECK(audit_to_json(rows.back())["per_layer_attention_projection"] == 592'128);
}
