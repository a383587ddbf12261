#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnforge/attention.hpp"
#include "attnforge/encoder.hpp"

namespace attnforge {

/// Closed-form parameter and MAC accounting for one encoder config.
struct ParamAudit {
  ModelConfig config;
  std::uint64_t per_layer_attention_projection = 0;
  std::uint64_t per_layer_attention_output = 0;
  std::uint64_t per_layer_ffn = 0;
  std::uint64_t per_layer_norms = 0;
  std::uint64_t embeddings = 0;  // token + position tables and the embedding layer norm
  std::uint64_t heads_lm_or_cls = 0;
  std::uint64_t total = 0;
  std::uint64_t projection_macs_per_token = 0;
  /// Attention-projection reduction against Standard, in percent.
  double reduction_vs_standard_pct = 0.0;
  /// Whole-model reduction against Standard, in percent.
  double total_reduction_vs_standard_pct = 0.0;

  std::uint64_t per_layer_total() const {
    return per_layer_attention_projection + per_layer_attention_output + per_layer_ffn + per_layer_norms;
  }
};

ParamAudit audit(const ModelConfig& config);

/// Multiply-accumulates per token spent producing Q, K and V:
/// Standard 3d², Symmetric 2d², Pairwise 2d², PartialQK 2d²+d, SharedQKV d²+3d.
std::uint64_t macs_per_token(AttentionVariant variant, std::uint64_t d, std::uint64_t heads);
/// Pairwise only: per-token cost of applying the per-head U blocks (d²/m);
/// zero for every other variant.
std::uint64_t bilinear_macs_per_token(AttentionVariant variant, std::uint64_t d, std::uint64_t heads);
/// Score and value-mixing cost per token (2·n·d), identical across variants.
std::uint64_t shared_score_macs_per_token(std::uint64_t n, std::uint64_t d);

/// One way of counting BERT-base learnables and what it predicts.
struct AccountingItem {
  std::string name;
  std::string assumptions;
  std::uint64_t standard_total = 0;
  std::uint64_t shared_total = 0;
  std::int64_t delta = 0;
  std::int64_t residual_vs_published_delta = 0;  // published delta minus this delta
  bool standard_matches_published = false;
  bool shared_matches_published = false;
};

/// Side-by-side comparison with the published BERT-base totals.
struct ReconciliationReport {
  static constexpr std::uint64_t kPublishedStandardTotal = 109'514'298;
  static constexpr std::uint64_t kPublishedSymmetricTotal = 102'427'194;
  static constexpr std::uint64_t kPublishedPairwiseTotal = 103'017'018;
  static constexpr std::uint64_t kPublishedSharedTotal = 95'337'218;
  static constexpr double kPublishedSharedReductionPct = 12.94;

  std::uint64_t our_standard_total = 0;
  std::uint64_t our_shared_total = 0;
  std::int64_t our_total_delta = 0;
  std::int64_t published_delta = 0;
  double published_reduction_pct = 0.0;  // recomputed from the published totals
  std::int64_t projection_delta = 0;  // L·(3d² − (d²+3d)), biases off
  std::int64_t residual = 0;          // published_delta − projection_delta
  std::vector<AccountingItem> items;
  std::vector<std::string> notes;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

/// Both audits must describe the BERT-base shape (L=12, d=768, m=12).
ReconciliationReport reconcile_bert_base(const ParamAudit& audit_standard, const ParamAudit& audit_shared);

/// Fixed-width table with one row per audit.
std::string audit_table_text(const std::vector<ParamAudit>& audits);
/// RFC 4180 CSV with a header row.
std::string audit_table_csv(const std::vector<ParamAudit>& audits);
nlohmann::json audit_to_json(const ParamAudit& a);

}  // namespace attnforge
