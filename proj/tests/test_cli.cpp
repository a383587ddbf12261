#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attnforge/cli.hpp"

using namespace attnforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("attnforge-cli-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

const char* kSmallTrain = R"({
  "model": {"variant": "shared-qkv", "layers": 1, "d_model": 16, "heads": 2, "vocab": 20, "max_seq": 8},
  "train": {"steps": 4, "batch": 4, "seq_len": 8, "eval_examples": 8, "eval_every": 2}
})";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"audit", "--format", "yaml"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);

  TempDir dir;
  const auto empty = write_file(dir.path() / "empty.json", "");
  CHECK(run({"audit", "--config", empty.string(), "--out-dir", dir.str()}).code == kExitUsage);
  const auto unknown = write_file(dir.path() / "unknown.json", R"({"modle": {}})");
  const auto r = run({"audit", "--config", unknown.string(), "--out-dir", dir.str()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("modle") != std::string::npos);
  CHECK(run({"export", "--checkpoint", (dir.path() / "missing.atnf").string(), "--out-dir", dir.str()}).code ==
        kExitUsage);
}

TEST_CASE("audit writes tables and a manifest") {
  TempDir dir;
  const auto r = run({"audit", "--out-dir", dir.str()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("66.5365") != std::string::npos);
  CHECK(r.out.find("48,952") != std::string::npos);
  const auto csv = slurp(dir.path() / "audit" / "audit.csv");
  CHECK(csv.find("592128") != std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(dir.path() / "audit" / "manifest.json"));
  CHECK(manifest["command"] == "audit");
  CHECK(manifest["exit_code"] == 0);
  CHECK(manifest.contains("resolved_config"));

  const auto json_run = run({"audit", "--out-dir", dir.str(), "--format", "json", "--variants", "standard"});
  REQUIRE(json_run.code == kExitOk);
  CHECK(nlohmann::json::accept(json_run.out));
}

TEST_CASE("gradcheck exit code follows the tolerance") {
  TempDir dir;
  CHECK(run({"gradcheck", "--out-dir", dir.str()}).code == kExitOk);
  CHECK(fs::exists(dir.path() / "gradcheck" / "gradcheck.csv"));
  CHECK(run({"gradcheck", "--out-dir", dir.str(), "--variants", "standard", "--tolerance", "1e-30"}).code ==
        kExitCheckFailed);
  CHECK(run({"gradcheck", "--out-dir", dir.str(), "--d", "64"}).code == kExitUsage);
}

TEST_CASE("train replays bit-identically from its manifest") {
  TempDir dir;
  const auto cfg = write_file(dir.path() / "train.json", kSmallTrain);
  const auto first = dir.path() / "first";
  REQUIRE(run({"train", "--config", cfg.string(), "--out-dir", first.string(), "--seed", "5"}).code == kExitOk);
  const auto second = dir.path() / "second";
  const auto manifest = first / "train" / "manifest.json";
  REQUIRE(run({"train", "--config", manifest.string(), "--out-dir", second.string()}).code == kExitOk);
  CHECK(slurp(first / "train" / "loss.csv") == slurp(second / "train" / "loss.csv"));
  CHECK(slurp(first / "train" / "model.atnf") == slurp(second / "train" / "model.atnf"));
  CHECK(run({"audit", "--config", manifest.string(), "--out-dir", second.string()}).code == kExitUsage);

  const auto exported = run({"export", "--checkpoint", (first / "train" / "model.atnf").string(), "--to-standard",
                             "--out-dir", dir.str()});
  CHECK(exported.code == kExitOk);
  CHECK(fs::exists(dir.path() / "export" / "standard.atnf"));
  CHECK(slurp(dir.path() / "export" / "params.csv").find("attention") != std::string::npos);
}

TEST_CASE("train with zero learning rate keeps the eval loss flat") {
  TempDir dir;
  const auto cfg = write_file(dir.path() / "train.json", kSmallTrain);
  REQUIRE(run({"train", "--config", cfg.string(), "--out-dir", dir.str(), "--lr", "0"}).code == kExitOk);
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "train" / "summary.json"));
  CHECK(summary["initial_eval_loss"] == summary["final_eval_loss"]);
}

TEST_CASE("bench reports speedups") {
  TempDir dir;
  const auto r = run({"bench", "--out-dir", dir.str(), "--d", "16", "--n", "8", "--batch", "2", "--heads", "2",
                      "--trials", "2", "--warmup", "0", "--format", "json"});
  REQUIRE(r.code == kExitOk);
  const auto doc = nlohmann::json::parse(slurp(dir.path() / "bench" / "bench.json"));
  REQUIRE(doc.contains("results"));
  CHECK(doc["results"][0].contains("speedup_vs_standard"));
}

TEST_CASE("sweep on a tiny model") {
  TempDir dir;
  const auto cfg = write_file(dir.path() / "sweep.json", R"({
    "model": {"variant": "standard", "layers": 1, "d_model": 16, "heads": 2, "vocab": 20, "max_seq": 8},
    "train": {"steps": 3, "batch": 4, "seq_len": 8, "eval_examples": 8, "eval_every": 3},
    "levels": [0, 0.2], "noise_seeds": 2, "eval_examples": 16
  })");
  REQUIRE(run({"sweep", "--config", cfg.string(), "--out-dir", dir.str()}).code == kExitOk);
  const auto csv = slurp(dir.path() / "sweep" / "sweep.csv");
  CHECK(csv.starts_with("level,acc_a,acc_b\r\n"));
  CHECK(run({"sweep", "--config", cfg.string(), "--out-dir", dir.str(), "--variants", "standard"}).code == kExitUsage);
}
