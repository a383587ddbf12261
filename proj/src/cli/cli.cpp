#include "attnforge/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnforge/audit.hpp"
#include "attnforge/checkpoint.hpp"
#include "attnforge/csv.hpp"
#include "attnforge/errors.hpp"
#include "attnforge/experiments/bench.hpp"
#include "attnforge/experiments/gradcheck.hpp"
#include "attnforge/experiments/sweep.hpp"
#include "attnforge/experiments/train.hpp"

namespace attnforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Reads a JSON config file. A run manifest is accepted too, in which case
/// its resolved config is replayed.
json read_config(const std::optional<std::string>& path, const std::string& command) {
  if (!path) return json::object();
  std::ifstream in(*path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + *path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError("config file '" + *path + "' is empty");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + *path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file '" + *path + "' must hold a JSON object");
  if (j.contains("resolved_config") && j.contains("command")) {
    if (j["command"] != command) {
      throw ConfigError("manifest was written by '" + j["command"].get<std::string>() + "', not '" + command + "'");
    }
    return j["resolved_config"];
  }
  return j;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

/// `overrides` laid over `defaults`; every key must be a known model field.
ModelConfig model_config_from(const json& overrides, const ModelConfig& defaults) {
  if (!overrides.is_object()) throw ConfigError("\"model\" must be a JSON object");
  json merged = defaults;
  for (const auto& [key, value] : overrides.items()) {
    if (!merged.contains(key)) throw ConfigError("unknown key '" + key + "' in model config");
    merged[key] = value;
  }
  ModelConfig config{};
  from_json(merged, config);
  return config;
}

std::vector<AttentionVariant> parse_variants(const std::vector<std::string>& names) {
  std::vector<AttentionVariant> out;
  for (const auto& name : names) {
    if (name == "all") return {kAllVariants.begin(), kAllVariants.end()};
    out.push_back(parse_variant(name));
  }
  return out;
}

std::vector<std::string> variant_names(const std::vector<AttentionVariant>& variants) {
  std::vector<std::string> out;
  for (auto v : variants) out.emplace_back(variant_name(v));
  return out;
}

enum class Format { Text, Csv, Json };

Format parse_format(const std::string& s) {
  if (s == "text") return Format::Text;
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  throw ConfigError("unknown format '" + s + "' (expected text, csv or json)");
}

/// Output directory, artifact list and manifest of one command run.
class Run {
 public:
  Run(std::string command, const fs::path& out_root)
      : command_(std::move(command)), dir_(out_root / command_), started_(utc_now()) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  fs::path path(const std::string& name) {
    outputs_.push_back((dir_ / name).string());
    return dir_ / name;
  }

  void write(const std::string& name, const std::string& content) {
    const auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw InputError("cannot write '" + p.string() + "'");
  }

  void finish(const json& resolved, std::uint64_t seed, int exit_code) {
    json manifest{{"schema_version", kSchemaVersion},
                  {"command", command_},
                  {"resolved_config", resolved},
                  {"seed", seed},
                  {"version", ATTNFORGE_VERSION},
                  {"started_at", started_},
                  {"finished_at", utc_now()},
                  {"exit_code", exit_code},
                  {"outputs", outputs_}};
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
  }

  const fs::path& dir() const { return dir_; }

 private:
  std::string command_;
  fs::path dir_;
  std::string started_;
  std::vector<std::string> outputs_;
};

fs::path resolve_out_dir(const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("ATTNFORGE_OUT_DIR"); env && *env) return env;
  return "attnforge-out";
}

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
  std::size_t threads = 1;
};

void add_common(CLI::App* sub, Common& c, bool with_threads = false) {
  sub->add_option("--config", c.config, "JSON config file or a run manifest to replay");
  sub->add_option("--seed", c.seed, "Root seed for every random stream");
  sub->add_option("--out-dir", c.out_dir, "Output directory (default: $ATTNFORGE_OUT_DIR or ./attnforge-out)");
  sub->add_option("--format", c.format, "Console output: text, csv or json");
  if (with_threads) {
    sub->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  } else {
    sub->add_option("--threads", c.threads, "Accepted for uniformity; this command is single-threaded")
        ->check(CLI::PositiveNumber);
  }
}

// ---------------------------------------------------------------- audit

struct AuditArgs {
  Common common;
  std::vector<std::string> variants;
};

int cmd_audit(const AuditArgs& a, std::ostream& out) {
  const json cfg = read_config(a.common.config, "audit");
  reject_unknown_keys(cfg, {"model", "variants", "format"}, "audit config");
  const ModelConfig base = model_config_from(cfg.value("model", json::object()), ModelConfig::bert_base(AttentionVariant::Standard));
  std::vector<std::string> names =
      a.variants.empty() ? get_or(cfg, "variants", variant_names({kAllVariants.begin(), kAllVariants.end()})) : a.variants;
  const auto variants = parse_variants(names);
  if (variants.empty()) throw ConfigError("no variants selected");
  const Format format = parse_format(a.common.format.value_or(get_or<std::string>(cfg, "format", "text")));

  std::vector<ParamAudit> audits;
  for (auto v : variants) {
    ModelConfig c = base;
    c.variant = v;
    audits.push_back(audit(c));
  }

  std::optional<ReconciliationReport> report;
  if (base.layers == 12 && base.d_model == 768 && base.heads == 12) {
    ModelConfig s = base, q = base;
    s.variant = AttentionVariant::Standard;
    q.variant = AttentionVariant::SharedQKV;
    report = reconcile_bert_base(audit(s), audit(q));
  }

  json resolved{{"model", base}, {"variants", variant_names(variants)}, {"format", a.common.format.value_or(get_or<std::string>(cfg, "format", "text"))}};
  resolved["model"].erase("variant");

  json doc{{"schema_version", kSchemaVersion}, {"audits", json::array()}, {"reconciliation", nullptr}};
  for (const auto& x : audits) doc["audits"].push_back(audit_to_json(x));
  if (report) doc["reconciliation"] = report->to_json();

  std::string text = audit_table_text(audits);
  if (report) text += "\n" + report->to_text();

  Run run("audit", resolve_out_dir(a.common.out_dir));
  run.write("audit.csv", audit_table_csv(audits));
  run.write("audit.json", doc.dump(2) + "\n");
  run.write("audit.txt", text);
  run.finish(resolved, a.common.seed.value_or(0), kExitOk);

  switch (format) {
    case Format::Text: out << text; break;
    case Format::Csv: out << audit_table_csv(audits); break;
    case Format::Json: out << doc.dump(2) << "\n"; break;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::optional<std::string> variant, task, schedule;
  std::optional<std::size_t> steps, batch, warmup;
  std::optional<double> lr, train_noise;
};

ModelConfig training_model(const json& cfg, const TrainConfig& train, AttentionVariant default_variant) {
  json model = cfg.value("model", json::object());
  if (!model.is_object()) throw ConfigError("\"model\" must be a JSON object");
  ModelConfig defaults = ModelConfig::tiny(default_variant);
  defaults.num_classes = is_classification(train.task) ? train.num_classes : 0;
  return model_config_from(model, defaults);
}

TrainConfig train_config_from(const json& cfg, TrainConfig defaults) {
  json merged = defaults;
  const json overrides = cfg.value("train", json::object());
  if (!overrides.is_object()) throw ConfigError("\"train\" must be a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    if (!merged.contains(key)) throw ConfigError("unknown key '" + key + "' in train config");
    merged[key] = value;
  }
  TrainConfig out;
  from_json(merged, out);
  return out;
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const json cfg = read_config(a.common.config, "train");
  reject_unknown_keys(cfg, {"model", "train"}, "train config");
  TrainConfig tc = train_config_from(cfg, TrainConfig{});
  if (a.common.seed) tc.seed = *a.common.seed;
  if (a.steps) tc.steps = *a.steps;
  if (a.batch) tc.batch = *a.batch;
  if (a.lr) tc.lr = *a.lr;
  if (a.warmup) tc.warmup_steps = *a.warmup;
  if (a.train_noise) tc.train_noise = *a.train_noise;
  if (a.task) tc.task = parse_task(*a.task);
  if (a.schedule) {
    json j = tc;
    j["schedule"] = *a.schedule;
    from_json(j, tc);
  }
  tc.validate();
  ModelConfig mc = training_model(cfg, tc, AttentionVariant::SharedQKV);
  if (a.variant) mc.variant = parse_variant(*a.variant);
  mc.validate();
  tc.task_spec(mc);
  const Format format = parse_format(a.common.format.value_or("text"));

  json resolved{{"model", mc}, {"train", tc}};
  Run run("train", resolve_out_dir(a.common.out_dir));

  std::vector<LossRecord> history;
  auto write_history = [&] {
    CsvTable loss({"step", "train_loss", "eval_loss"});
    for (const auto& r : history) {
      loss.add_row({std::to_string(r.step), std::isfinite(r.train_loss) ? format_double(r.train_loss) : std::string(),
                    optional_cell(r.eval_loss)});
    }
    run.write("loss.csv", loss.str());
  };

  TrainResult result;
  try {
    result = train(tc, mc, [&](const LossRecord& r) { history.push_back(r); });
  } catch (const RunError& e) {
    write_history();
    run.finish(resolved, tc.seed, kExitCheckFailed);
    err << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kExitCheckFailed;
  }
  write_history();
  save_checkpoint(run.path("model.atnf"), result.model);

  const auto eval = make_eval_set(tc, mc, tc.eval_examples, tc.seed);
  json summary{{"schema_version", kSchemaVersion},
               {"variant", std::string(variant_name(mc.variant))},
               {"task", std::string(task_name(tc.task))},
               {"steps", tc.steps},
               {"parameter_count", result.model.parameter_count()},
               {"initial_eval_loss", result.initial_eval_loss},
               {"final_eval_loss", result.final_eval_loss},
               {"final_eval_accuracy", evaluate_accuracy(result.model, eval)}};
  run.write("summary.json", summary.dump(2) + "\n");
  run.finish(resolved, tc.seed, kExitOk);

  if (format == Format::Json) {
    out << summary.dump(2) << "\n";
  } else if (format == Format::Csv) {
    out << std::ifstream(run.dir() / "loss.csv").rdbuf();
  } else {
    out << std::fixed << std::setprecision(4) << variant_name(mc.variant) << " on " << task_name(tc.task) << ": eval loss "
        << result.initial_eval_loss << " -> " << result.final_eval_loss << " after " << tc.steps
        << " steps; accuracy " << summary["final_eval_accuracy"].get<double>() << "\n"
        << "artifacts in " << run.dir().string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  Common common;
  std::vector<std::string> variants;
  std::vector<double> levels;
  std::optional<std::size_t> noise_seeds, steps;
};

// Copy task by default: masked-token accuracy reacts to embedding noise,
// while mean-pooled classification averages most of it away.
TrainConfig sweep_train_defaults() {
  TrainConfig tc;
  tc.task = Task::Copy;
  tc.steps = 1000;
  tc.eval_every = 100;
  return tc;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const json cfg = read_config(a.common.config, "sweep");
  reject_unknown_keys(cfg, {"model", "train", "variants", "levels", "noise_seeds", "eval_examples"}, "sweep config");
  SweepExperiment ex;
  ex.train = train_config_from(cfg, sweep_train_defaults());
  if (a.common.seed) ex.train.seed = *a.common.seed;
  if (a.steps) ex.train.steps = *a.steps;
  ex.train.validate();
  ex.model = training_model(cfg, ex.train, AttentionVariant::Standard);

  const auto names = a.variants.empty() ? get_or(cfg, "variants", std::vector<std::string>{"standard", "shared-qkv"})
                                        : a.variants;
  const auto variants = parse_variants(names);
  if (variants.size() != 2) throw ConfigError("sweep compares exactly two variants");
  ex.variant_a = variants[0];
  ex.variant_b = variants[1];
  ex.eval_examples = get_or<std::size_t>(cfg, "eval_examples", ex.eval_examples);
  if (ex.eval_examples < 1) throw ConfigError("eval_examples must be at least 1");
  ex.sweep.levels = a.levels.empty() ? get_or(cfg, "levels", ex.sweep.levels) : a.levels;
  ex.sweep.noise_seeds = a.noise_seeds.value_or(get_or<std::size_t>(cfg, "noise_seeds", ex.sweep.noise_seeds));
  ex.sweep.seed = ex.train.seed;
  ex.sweep.threads = a.common.threads;
  ex.sweep.validate();
  const Format format = parse_format(a.common.format.value_or("text"));

  json resolved{{"model", ex.model},
                {"train", ex.train},
                {"variants", variant_names(variants)},
                {"levels", ex.sweep.levels},
                {"noise_seeds", ex.sweep.noise_seeds},
                {"eval_examples", ex.eval_examples}};
  resolved["model"].erase("variant");

  Run run("sweep", resolve_out_dir(a.common.out_dir));
  SweepExperimentResult result;
  try {
    result = run_sweep_experiment(ex);
  } catch (const RunError&) {
    run.finish(resolved, ex.train.seed, kExitCheckFailed);
    throw;
  }
  const auto table = sweep_table(result.rows);
  json doc{{"schema_version", kSchemaVersion},
           {"variant_a", std::string(variant_name(ex.variant_a))},
           {"variant_b", std::string(variant_name(ex.variant_b))},
           {"final_eval_loss_a", result.a.final_eval_loss},
           {"final_eval_loss_b", result.b.final_eval_loss},
           {"rows", json::array()}};
  for (const auto& r : result.rows) doc["rows"].push_back(to_json(r));
  run.write("sweep.csv", table.str());
  run.write("sweep.json", doc.dump(2) + "\n");
  run.finish(resolved, ex.train.seed, kExitOk);

  if (format == Format::Json) {
    out << doc.dump(2) << "\n";
  } else if (format == Format::Csv) {
    out << table.str();
  } else {
    out << "level   " << std::setw(12) << variant_name(ex.variant_a) << std::setw(12) << variant_name(ex.variant_b) << "\n";
    for (const auto& r : result.rows) {
      out << std::fixed << std::setprecision(2) << std::setw(5) << r.level << "   " << std::setprecision(4)
          << std::setw(12) << r.acc_a << std::setw(12) << r.acc_b << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  Common common;
  std::vector<std::string> variants;
  std::optional<std::size_t> d, n, batch, heads, ffn, trials, warmup;
  std::optional<std::string> precision;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const json cfg = read_config(a.common.config, "bench");
  reject_unknown_keys(cfg, {"variants", "shape", "precision", "warmup", "trials", "seed"}, "bench config");
  BenchOptions o;
  const json shape = cfg.value("shape", json::object());
  reject_unknown_keys(shape, {"d", "n", "batch", "heads", "ffn"}, "bench shape");
  o.shape.d = a.d.value_or(get_or(shape, "d", o.shape.d));
  o.shape.n = a.n.value_or(get_or(shape, "n", o.shape.n));
  o.shape.batch = a.batch.value_or(get_or(shape, "batch", o.shape.batch));
  o.shape.heads = a.heads.value_or(get_or(shape, "heads", o.shape.heads));
  o.shape.ffn = a.ffn.value_or(get_or(shape, "ffn", o.shape.ffn));
  o.trials = a.trials.value_or(get_or(cfg, "trials", o.trials));
  o.warmup = a.warmup.value_or(get_or(cfg, "warmup", o.warmup));
  o.seed = a.common.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 0));
  o.precision = parse_precision(a.precision.value_or(get_or<std::string>(cfg, "precision", "float")));
  o.variants = parse_variants(a.variants.empty() ? get_or(cfg, "variants", variant_names(o.variants)) : a.variants);
  o.validate();
  const Format format = parse_format(a.common.format.value_or("text"));

  json resolved{{"variants", variant_names(o.variants)},
                {"shape", {{"d", o.shape.d}, {"n", o.shape.n}, {"batch", o.shape.batch}, {"heads", o.shape.heads}, {"ffn", o.shape.ffn}}},
                {"precision", std::string(precision_name(o.precision))},
                {"warmup", o.warmup},
                {"trials", o.trials},
                {"seed", o.seed}};

  const auto results = bench(o);
  json doc{{"schema_version", kSchemaVersion}, {"results", json::array()}};
  CsvTable table({"variant", "mean_ms", "std_ms", "trials", "projection_macs_per_token", "mac_ratio_vs_standard",
                  "speedup_vs_standard"});
  for (const auto& r : results) {
    doc["results"].push_back(to_json(r));
    table.add_row({std::string(variant_name(r.variant)), format_double(r.mean_ms), format_double(r.std_ms),
                   std::to_string(r.samples_ms.size()), std::to_string(r.projection_macs_per_token),
                   format_double(r.mac_ratio_vs_standard), format_double(r.speedup_vs_standard)});
  }
  Run run("bench", resolve_out_dir(a.common.out_dir));
  run.write("bench.csv", table.str());
  run.write("bench.json", doc.dump(2) + "\n");
  run.finish(resolved, o.seed, kExitOk);

  if (format == Format::Json) {
    out << doc.dump(2) << "\n";
  } else if (format == Format::Csv) {
    out << table.str();
  } else {
    out << std::left << std::setw(12) << "variant" << std::right << std::setw(12) << "mean ms" << std::setw(10) << "std ms"
        << std::setw(12) << "MAC ratio" << std::setw(10) << "speedup" << "\n";
    for (const auto& r : results) {
      out << std::left << std::setw(12) << variant_name(r.variant) << std::right << std::fixed << std::setprecision(2)
          << std::setw(12) << r.mean_ms << std::setw(10) << r.std_ms << std::setprecision(4) << std::setw(12)
          << r.mac_ratio_vs_standard << std::setprecision(3) << std::setw(10) << r.speedup_vs_standard << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradCheckArgs {
  Common common;
  std::vector<std::string> variants;
  std::optional<std::size_t> n, d, heads;
  std::optional<bool> bias;
  std::optional<double> tolerance;
};

int cmd_gradcheck(const GradCheckArgs& a, std::ostream& out) {
  const json cfg = read_config(a.common.config, "gradcheck");
  reject_unknown_keys(cfg, {"variants", "shape", "seed", "tolerance", "abs_tolerance", "step", "linear"},
                      "gradcheck config");
  const json shape_cfg = cfg.value("shape", json::object());
  reject_unknown_keys(shape_cfg, {"n", "d", "heads", "bias"}, "gradcheck shape");
  GradCheckShape shape;
  shape.n = a.n.value_or(get_or(shape_cfg, "n", shape.n));
  shape.d = a.d.value_or(get_or(shape_cfg, "d", shape.d));
  shape.heads = a.heads.value_or(get_or(shape_cfg, "heads", shape.heads));
  shape.bias = a.bias.value_or(get_or(shape_cfg, "bias", shape.bias));
  shape.validate();
  const auto variants = parse_variants(
      a.variants.empty() ? get_or(cfg, "variants", variant_names({kAllVariants.begin(), kAllVariants.end()}))
                         : a.variants);
  const std::uint64_t seed = a.common.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 0));
  const double tolerance = a.tolerance.value_or(get_or(cfg, "tolerance", 1e-5));
  // Gradients that are structurally zero (a key bias under softmax) have no
  // meaningful relative error; an absolute bound can accept them.
  const double abs_tolerance = get_or(cfg, "abs_tolerance", 0.0);
  const double step = get_or(cfg, "step", 1e-5);
  const bool linear = get_or(cfg, "linear", true);
  if (!(tolerance > 0) || !(step > 0) || abs_tolerance < 0) throw ConfigError("tolerances and step must be positive");
  const Format format = parse_format(a.common.format.value_or("text"));

  json resolved{{"variants", variant_names(variants)},
                {"shape", {{"n", shape.n}, {"d", shape.d}, {"heads", shape.heads}, {"bias", shape.bias}}},
                {"seed", seed},
                {"tolerance", tolerance},
                {"abs_tolerance", abs_tolerance},
                {"step", step},
                {"linear", linear}};

  std::vector<GradCheckReport> reports;
  for (auto v : variants) reports.push_back(grad_check(v, shape, seed, step));
  if (linear) reports.push_back(linear_grad_check(seed, step));

  bool all_passed = true;
  json doc{{"schema_version", kSchemaVersion}, {"tolerance", tolerance}, {"reports", json::array()}};
  CsvTable table({"subject", "param", "size", "max_rel_error", "max_abs_error", "passed"});
  std::ostringstream text;
  for (const auto& r : reports) {
    bool passed = true;
    for (const auto& e : r.entries) {
      const bool ok = e.max_rel_error < tolerance || e.max_abs_error < abs_tolerance;
      passed = passed && ok;
      table.add_row({r.subject, e.name, std::to_string(e.size), format_double(e.max_rel_error),
                     format_double(e.max_abs_error), ok ? "true" : "false"});
    }
    all_passed = all_passed && passed;
    auto j = to_json(r);
    j["passed"] = passed;
    doc["reports"].push_back(j);
    text << std::left << std::setw(12) << r.subject << " max rel error " << std::scientific << std::setprecision(3)
         << r.max_rel_error << "  " << (passed ? "ok" : "FAILED") << "\n";
  }
  doc["passed"] = all_passed;

  Run run("gradcheck", resolve_out_dir(a.common.out_dir));
  run.write("gradcheck.csv", table.str());
  run.write("gradcheck.json", doc.dump(2) + "\n");
  const int code = all_passed ? kExitOk : kExitCheckFailed;
  run.finish(resolved, seed, code);

  switch (format) {
    case Format::Text: out << text.str(); break;
    case Format::Csv: out << table.str(); break;
    case Format::Json: out << doc.dump(2) << "\n"; break;
  }
  return code;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
  Common common;
  std::optional<std::string> checkpoint;
  bool to_standard = false;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const json cfg = read_config(a.common.config, "export");
  reject_unknown_keys(cfg, {"checkpoint", "to_standard"}, "export config");
  const auto checkpoint = a.checkpoint ? *a.checkpoint : get_or<std::string>(cfg, "checkpoint", "");
  if (checkpoint.empty()) throw ConfigError("export needs --checkpoint");
  const bool to_std = a.to_standard || get_or(cfg, "to_standard", false);
  const Format format = parse_format(a.common.format.value_or("text"));

  auto model = load_checkpoint(fs::path(checkpoint));
  if (to_std) model = to_standard(model);

  CsvTable table({"name", "shape", "count", "l2_norm"});
  json params = json::array();
  model.for_each_param([&](const std::string& name, const Tensor<double>& t) {
    double sq = 0.0;
    for (double v : t.data()) sq += v * v;
    table.add_row({name, to_string(t.shape()), std::to_string(t.size()), format_double(std::sqrt(sq))});
    params.push_back({{"name", name}, {"shape", t.shape()}, {"count", t.size()}, {"l2_norm", std::sqrt(sq)}});
  });
  json doc{{"schema_version", kSchemaVersion},
           {"config", model.config},
           {"trained_steps", model.trained_steps},
           {"parameter_count", model.parameter_count()},
           {"params", params}};

  Run run("export", resolve_out_dir(a.common.out_dir));
  run.write("params.csv", table.str());
  run.write("params.json", doc.dump(2) + "\n");
  if (to_std) save_checkpoint(run.path("standard.atnf"), model);
  run.finish({{"checkpoint", checkpoint}, {"to_standard", to_std}}, a.common.seed.value_or(0), kExitOk);

  switch (format) {
    case Format::Text:
      out << variant_name(model.config.variant) << " model, " << model.parameter_count() << " parameters in "
          << params.size() << " tensors\n";
      break;
    case Format::Csv: out << table.str(); break;
    case Format::Json: out << doc.dump(2) << "\n"; break;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shared-weight self-attention toolkit: audits, training, sweeps, benchmarks, gradient checks", "attnforge"};
  app.set_version_flag("--version", std::string(ATTNFORGE_VERSION));
  app.require_subcommand(1);

  AuditArgs audit_args;
  auto* audit_cmd = app.add_subcommand("audit", "Parameter and MAC audit per attention variant");
  add_common(audit_cmd, audit_args.common);
  audit_cmd->add_option("--variant,--variants", audit_args.variants, "Variants to audit (comma-separated or 'all')")
      ->delimiter(',');

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a tiny encoder on a synthetic task");
  add_common(train_cmd, train_args.common);
  train_cmd->add_option("--variant", train_args.variant, "Attention variant");
  train_cmd->add_option("--task", train_args.task, "copy, reversal, mlm-synthetic or toy-classify");
  train_cmd->add_option("--steps", train_args.steps, "Optimizer steps");
  train_cmd->add_option("--batch", train_args.batch, "Sequences per step");
  train_cmd->add_option("--lr", train_args.lr, "Peak learning rate");
  train_cmd->add_option("--warmup", train_args.warmup, "Linear warmup steps");
  train_cmd->add_option("--schedule", train_args.schedule, "constant or linear");
  train_cmd->add_option("--train-noise", train_args.train_noise, "Embedding noise level during training");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Noise-robustness sweep of two trained variants");
  add_common(sweep_cmd, sweep_args.common, true);
  sweep_cmd->add_option("--variant,--variants", sweep_args.variants, "Exactly two variants")->delimiter(',');
  sweep_cmd->add_option("--levels", sweep_args.levels, "Noise levels in [0, 0.40]")->delimiter(',');
  sweep_cmd->add_option("--noise-seeds", sweep_args.noise_seeds, "Noise draws averaged per level");
  sweep_cmd->add_option("--steps", sweep_args.steps, "Training steps per model");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Time one encoder block forward+backward per variant");
  add_common(bench_cmd, bench_args.common);
  bench_cmd->add_option("--variant,--variants", bench_args.variants, "Variants (Standard is always included)")
      ->delimiter(',');
  bench_cmd->add_option("--d", bench_args.d, "Model width");
  bench_cmd->add_option("--n", bench_args.n, "Sequence length");
  bench_cmd->add_option("--batch", bench_args.batch, "Sequences per step");
  bench_cmd->add_option("--heads", bench_args.heads, "Attention heads");
  bench_cmd->add_option("--ffn", bench_args.ffn, "Feed-forward width (0: 4d)");
  bench_cmd->add_option("--trials", bench_args.trials, "Timed trials");
  bench_cmd->add_option("--warmup", bench_args.warmup, "Untimed warmup trials");
  bench_cmd->add_option("--precision", bench_args.precision, "float or double");

  GradCheckArgs gc_args;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of attention gradients");
  add_common(gc_cmd, gc_args.common);
  gc_cmd->add_option("--variant,--variants", gc_args.variants, "Variants (comma-separated or 'all')")->delimiter(',');
  gc_cmd->add_option("--n", gc_args.n, "Sequence length (<= 8)");
  gc_cmd->add_option("--d", gc_args.d, "Model width (<= 32)");
  gc_cmd->add_option("--heads", gc_args.heads, "Attention heads");
  gc_cmd->add_option("--bias", gc_args.bias, "Include projection biases");
  gc_cmd->add_option("--tolerance", gc_args.tolerance, "Maximum relative error");

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export", "Parameter inventory of a checkpoint");
  add_common(export_cmd, export_args.common);
  export_cmd->add_option("--checkpoint", export_args.checkpoint, "Checkpoint file");
  export_cmd->add_flag("--to-standard", export_args.to_standard, "Rewrite every attention layer as Standard");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*audit_cmd) return cmd_audit(audit_args, out);
    if (*train_cmd) return cmd_train(train_args, out, err);
    if (*sweep_cmd) return cmd_sweep(sweep_args, out);
    if (*bench_cmd) return cmd_bench(bench_args, out);
    if (*gc_cmd) return cmd_gradcheck(gc_args, out);
    if (*export_cmd) return cmd_export(export_args, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const RunError& e) {
    err << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kExitCheckFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace attnforge
