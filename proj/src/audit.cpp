#include "attnforge/audit.hpp"

#include <iomanip>
#include <sstream>

#include "attnforge/csv.hpp"

namespace attnforge {

std::uint64_t macs_per_token(AttentionVariant variant, std::uint64_t d, std::uint64_t heads) {
  // Same closed forms as the parameter counts: one MAC per projection weight
  // per token, plus one per diagonal scale entry.
  if (variant == AttentionVariant::Pairwise) return count_projection_params(variant, d, heads, false) - d * d / heads;
  return count_projection_params(variant, d, heads, false);
}

std::uint64_t bilinear_macs_per_token(AttentionVariant variant, std::uint64_t d, std::uint64_t heads) {
  if (heads == 0 || d % heads != 0) throw ConfigError("width not divisible by heads");
  return variant == AttentionVariant::Pairwise ? d * d / heads : 0;
}

std::uint64_t shared_score_macs_per_token(std::uint64_t n, std::uint64_t d) { return 2 * n * d; }

namespace {

ParamAudit raw_audit(const ModelConfig& c) {
  c.validate();
  const std::uint64_t d = c.d_model, f = c.ffn(), v = c.vocab;
  ParamAudit a;
  a.config = c;
  a.per_layer_attention_projection = count_projection_params(c.variant, d, c.heads, c.bias);
  a.per_layer_attention_output = d * d + (c.bias ? d : 0);
  a.per_layer_ffn = 2 * d * f + f + d;
  a.per_layer_norms = 4 * d;
  a.embeddings = v * d + c.max_seq * d + 2 * d;
  a.heads_lm_or_cls = c.num_classes == 0 ? v : d * c.num_classes + c.num_classes;
  a.total = c.layers * a.per_layer_total() + a.embeddings + a.heads_lm_or_cls;
  a.projection_macs_per_token = macs_per_token(c.variant, d, c.heads);
  return a;
}

double reduction_pct(std::uint64_t ours, std::uint64_t baseline) {
  return 100.0 * (1.0 - static_cast<double>(ours) / static_cast<double>(baseline));
}

}  // namespace

ParamAudit audit(const ModelConfig& config) {
  auto a = raw_audit(config);
  auto standard_config = config;
  standard_config.variant = AttentionVariant::Standard;
  const auto s = raw_audit(standard_config);
  a.reduction_vs_standard_pct = reduction_pct(a.per_layer_attention_projection, s.per_layer_attention_projection);
  a.total_reduction_vs_standard_pct = reduction_pct(a.total, s.total);
  return a;
}

namespace {

/// BERT-for-masked-LM style total: segment embeddings, biased attention, an
/// MLM transform (dense + layer norm) and a decoder bias tied to the token table.
std::uint64_t bert_mlm_total(const ModelConfig& c, std::uint64_t projection_per_layer) {
  const std::uint64_t d = c.d_model, f = c.ffn(), v = c.vocab;
  const std::uint64_t embeddings = v * d + c.max_seq * d + 2 * d + 2 * d;
  const std::uint64_t layer = projection_per_layer + (d * d + d) + (2 * d * f + f + d) + 4 * d;
  const std::uint64_t head = d * d + d + 2 * d + v;
  return embeddings + c.layers * layer + head;
}

std::string with_commas(std::int64_t value) {
  std::string digits = std::to_string(value < 0 ? -value : value);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return value < 0 ? "-" + out : out;
}

}  // namespace

ReconciliationReport reconcile_bert_base(const ParamAudit& audit_standard, const ParamAudit& audit_shared) {
  for (const auto* a : {&audit_standard, &audit_shared}) {
    if (a->config.layers != 12 || a->config.d_model != 768 || a->config.heads != 12) {
      throw ContractError("reconciliation needs BERT-base audits (L=12, d=768, m=12)");
    }
  }
  if (audit_standard.config.variant != AttentionVariant::Standard ||
      audit_shared.config.variant != AttentionVariant::SharedQKV) {
    throw ContractError("reconciliation compares a Standard audit with a SharedQKV audit");
  }
  using R = ReconciliationReport;
  const auto& c = audit_standard.config;
  const std::uint64_t d = c.d_model, m = c.heads, L = c.layers;

  R r;
  r.our_standard_total = audit_standard.total;
  r.our_shared_total = audit_shared.total;
  r.our_total_delta = static_cast<std::int64_t>(r.our_standard_total) - static_cast<std::int64_t>(r.our_shared_total);
  r.published_delta = static_cast<std::int64_t>(R::kPublishedStandardTotal - R::kPublishedSharedTotal);
  r.published_reduction_pct = 100.0 * static_cast<double>(r.published_delta) / static_cast<double>(R::kPublishedStandardTotal);
  r.projection_delta = static_cast<std::int64_t>(L * (3 * d * d - (d * d + 3 * d)));
  r.residual = r.published_delta - r.projection_delta;

  auto item = [&](std::string name, std::string assumptions, std::uint64_t standard, std::uint64_t shared) {
    AccountingItem it{std::move(name), std::move(assumptions), standard, shared, 0, 0, false, false};
    it.delta = static_cast<std::int64_t>(standard) - static_cast<std::int64_t>(shared);
    it.residual_vs_published_delta = r.published_delta - it.delta;
    it.standard_matches_published = standard == R::kPublishedStandardTotal;
    it.shared_matches_published = shared == R::kPublishedSharedTotal;
    r.items.push_back(std::move(it));
  };

  item("this-encoder", "encoder as audited: no segment embeddings, tied MLM head with bias only, projection bias " +
                           std::string(c.bias ? "on" : "off"),
       audit_standard.total, audit_shared.total);
  const std::uint64_t std_proj = 3 * d * d + 3 * d;
  item("bert-mlm/shared-bias-on-ws",
       "BERT masked-LM accounting (2 segment embeddings, biased Q/K/V/O, MLM dense+LN transform, decoder bias); "
       "shared keeps one bias on W_s",
       bert_mlm_total(c, std_proj), bert_mlm_total(c, d * d + 3 * d + d));
  item("bert-mlm/shared-no-bias", "BERT masked-LM accounting; shared projection without any bias",
       bert_mlm_total(c, std_proj), bert_mlm_total(c, d * d + 3 * d));
  item("bert-mlm/shared-three-biases", "BERT masked-LM accounting; shared keeps per-role Q/K/V biases",
       bert_mlm_total(c, std_proj), bert_mlm_total(c, d * d + 3 * d + 3 * d));
  item("projection-only", "only the Q/K/V projection counts change, biases off: L·(3d² − (d²+3d))",
       R::kPublishedStandardTotal, R::kPublishedStandardTotal - static_cast<std::uint64_t>(r.projection_delta));

  const auto symmetric = bert_mlm_total(c, 2 * d * d + 2 * d);
  const auto pairwise = bert_mlm_total(c, 2 * d * d + 2 * d + d * d / m);
  std::ostringstream pct;
  pct << std::fixed << std::setprecision(4) << r.published_reduction_pct;
  r.notes = {
      "published delta " + with_commas(r.published_delta) + " = " + with_commas(R::kPublishedStandardTotal) + " - " +
          with_commas(R::kPublishedSharedTotal) + " is " + pct.str() +
          "% of the Standard total; the published 12.94% is this value truncated to two decimals",
      "projection-only delta " + with_commas(r.projection_delta) + " leaves a residual of " +
          with_commas(r.residual) + " parameters that no listed accounting explains (open question)",
      "BERT masked-LM accounting reproduces the published Standard total " +
          std::string(bert_mlm_total(c, std_proj) == R::kPublishedStandardTotal ? "exactly" : "NOT exactly") +
          ", Symmetric " + with_commas(static_cast<std::int64_t>(symmetric)) +
          (symmetric == R::kPublishedSymmetricTotal ? " (exact)" : " (differs)") + ", Pairwise " +
          with_commas(static_cast<std::int64_t>(pairwise)) +
          (pairwise == R::kPublishedPairwiseTotal ? " (exact)" : " (differs)"),
      "the published shared-weight delta is not divisible by the 12 layers, so it cannot come from a per-layer "
      "change alone",
  };
  return r;
}

std::string ReconciliationReport::to_text() const {
  std::ostringstream os;
  os << "BERT-base reconciliation\n";
  os << "  published totals: standard " << with_commas(kPublishedStandardTotal) << ", shared "
     << with_commas(kPublishedSharedTotal) << ", delta " << with_commas(published_delta) << " (" << std::fixed
     << std::setprecision(4) << published_reduction_pct << "%, published as " << std::setprecision(2)
     << kPublishedSharedReductionPct << "%)\n";
  os << "  our totals:       standard " << with_commas(static_cast<std::int64_t>(our_standard_total)) << ", shared "
     << with_commas(static_cast<std::int64_t>(our_shared_total)) << ", delta " << with_commas(our_total_delta)
     << "\n";
  os << "  projection-only delta " << with_commas(projection_delta) << ", residual vs published delta "
     << with_commas(residual) << "\n";
  os << "  accounting assumptions:\n";
  for (const auto& it : items) {
    os << "    - " << it.name << ": standard " << with_commas(static_cast<std::int64_t>(it.standard_total))
       << (it.standard_matches_published ? " (=published)" : "") << ", shared "
       << with_commas(static_cast<std::int64_t>(it.shared_total)) << (it.shared_matches_published ? " (=published)" : "")
       << ", delta " << with_commas(it.delta) << ", residual " << with_commas(it.residual_vs_published_delta) << "\n"
       << "      " << it.assumptions << "\n";
  }
  os << "  notes:\n";
  for (const auto& n : notes) os << "    * " << n << "\n";
  return os.str();
}

nlohmann::json ReconciliationReport::to_json() const {
  nlohmann::json items_json = nlohmann::json::array();
  for (const auto& it : items) {
    items_json.push_back({{"name", it.name},
                          {"assumptions", it.assumptions},
                          {"standard_total", it.standard_total},
                          {"shared_total", it.shared_total},
                          {"delta", it.delta},
                          {"residual_vs_published_delta", it.residual_vs_published_delta},
                          {"standard_matches_published", it.standard_matches_published},
                          {"shared_matches_published", it.shared_matches_published}});
  }
  return {{"published_standard_total", kPublishedStandardTotal},
          {"published_shared_total", kPublishedSharedTotal},
          {"published_delta", published_delta},
          {"published_reduction_pct", published_reduction_pct},
          {"published_reduction_pct_as_printed", kPublishedSharedReductionPct},
          {"our_standard_total", our_standard_total},
          {"our_shared_total", our_shared_total},
          {"our_total_delta", our_total_delta},
          {"projection_delta", projection_delta},
          {"residual", residual},
          {"items", items_json},
          {"notes", notes}};
}

namespace {

std::string pct_cell(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

std::string audit_table_text(const std::vector<ParamAudit>& audits) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "variant" << std::right << std::setw(14) << "proj/layer" << std::setw(12)
     << "out/layer" << std::setw(12) << "ffn/layer" << std::setw(10) << "ln/layer" << std::setw(14) << "embeddings"
     << std::setw(10) << "head" << std::setw(14) << "total" << std::setw(14) << "proj MAC/tok" << std::setw(12)
     << "proj red %" << std::setw(12) << "total red %" << "\n";
  for (const auto& a : audits) {
    os << std::left << std::setw(12) << variant_name(a.config.variant) << std::right << std::setw(14)
       << a.per_layer_attention_projection << std::setw(12) << a.per_layer_attention_output << std::setw(12)
       << a.per_layer_ffn << std::setw(10) << a.per_layer_norms << std::setw(14) << a.embeddings << std::setw(10)
       << a.heads_lm_or_cls << std::setw(14) << a.total << std::setw(14) << a.projection_macs_per_token
       << std::setw(12) << pct_cell(a.reduction_vs_standard_pct) << std::setw(12)
       << pct_cell(a.total_reduction_vs_standard_pct) << "\n";
  }
  return os.str();
}

std::string audit_table_csv(const std::vector<ParamAudit>& audits) {
  CsvTable table({"variant", "layers", "d_model", "heads", "bias", "per_layer_attention_projection",
                  "per_layer_attention_output", "per_layer_ffn", "per_layer_norms", "embeddings", "heads_lm_or_cls",
                  "total", "projection_macs_per_token", "reduction_vs_standard_pct",
                  "total_reduction_vs_standard_pct"});
  for (const auto& a : audits) {
    table.add_row({std::string(variant_name(a.config.variant)), std::to_string(a.config.layers),
                   std::to_string(a.config.d_model), std::to_string(a.config.heads), a.config.bias ? "true" : "false",
                   std::to_string(a.per_layer_attention_projection), std::to_string(a.per_layer_attention_output),
                   std::to_string(a.per_layer_ffn), std::to_string(a.per_layer_norms), std::to_string(a.embeddings),
                   std::to_string(a.heads_lm_or_cls), std::to_string(a.total),
                   std::to_string(a.projection_macs_per_token), pct_cell(a.reduction_vs_standard_pct),
                   pct_cell(a.total_reduction_vs_standard_pct)});
  }
  return table.str();
}

nlohmann::json audit_to_json(const ParamAudit& a) {
  return {{"config", a.config},
          {"per_layer_attention_projection", a.per_layer_attention_projection},
          {"per_layer_attention_output", a.per_layer_attention_output},
          {"per_layer_ffn", a.per_layer_ffn},
          {"per_layer_norms", a.per_layer_norms},
          {"embeddings", a.embeddings},
          {"heads_lm_or_cls", a.heads_lm_or_cls},
          {"total", a.total},
          {"projection_macs_per_token", a.projection_macs_per_token},
          {"reduction_vs_standard_pct", a.reduction_vs_standard_pct},
          {"total_reduction_vs_standard_pct", a.total_reduction_vs_standard_pct}};
}

}  // namespace attnforge
