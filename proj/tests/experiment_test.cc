// Copyright 2026 The rprobe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rprobe/errors.h"
#include "rprobe/experiment.h"
#include "support.h"

using namespace rprobe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Relative path -> bytes for every regular file under `dir`.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out[e.path().lexically_relative(dir).generic_string()] = slurp(e.path());
  return out;
}

const char* kSpec = R"({"n_docs": 12, "tokens_per_doc": 20, "n_entities": 3, "seed": 3,
  "sources": [
    {"name": "A", "dim": 6, "signal": [1.0, 0.0], "noise": [0.3, 1.0]},
    {"name": "B", "dim": 6, "signal": [0.0, 0.0], "noise": [1.0, 1.0]}]})";

// Writes the spec, generates data/ and returns the workspace root.
fs::path workspace(const std::string& name) {
  const fs::path dir = rprobe::testing::scratch_dir(name);
  put(dir / "spec.json", kSpec);
  CommandOptions o;
  o.config = dir / "spec.json";
  o.out = dir / "data";
  o.quiet = true;
  std::ostringstream log;
  cmd_gen_synth(o, log);
  return dir;
}

std::string train_config(const std::string& out, const std::string& aggregator = "attention") {
  return R"({"bank": "data", "corpus": "data/corpus.jsonl", "out": ")" + out +
         R"(", "fusion": {"aggregator": ")" + aggregator +
         R"(", "project": true, "common_dim": 4},
    "train": {"learning_rate": 0.001, "max_epochs": 2, "patience": 2, "seeds": [1, 2],
              "max_span_width": 2, "hidden_size": 6, "width_dim": 2},
    "probe": {"reference": "A", "n_batches": 3, "batch_size": 8}})";
}

CommandOptions quiet(const fs::path& config) {
  CommandOptions o;
  o.config = config;
  o.quiet = true;
  return o;
}

Json without_clock(Json j) {
  j.erase("wall_clock_seconds");
  return j;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RPROBE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("digest tracks only settings that change the model") {
  const std::vector<std::string> ab{"A", "B"}, ba{"B", "A"}, a{"A"};
  FusionConfig f;
  TrainConfig t;
  const std::string base = config_digest(ab, f, t);
  CHECK(base.size() == 16);
  CHECK(config_digest(ba, f, t) == base);
  CHECK(config_digest(a, f, t) != base);

  TrainConfig seeds = t;
  seeds.seeds = {9};
  CHECK(config_digest(ab, f, seeds) == base);
  TrainConfig lr = t;
  lr.learning_rate = 0.5;
  CHECK(config_digest(ab, f, lr) != base);
  TrainConfig width = t;
  width.head.max_span_width = 3;
  CHECK(config_digest(ab, f, width) != base);

  FusionConfig dim = f;
  dim.common_dim = 99;  // unused without projection
  CHECK(config_digest(ab, dim, t) == base);
  dim.project = true;
  const std::string projected = config_digest(ab, dim, t);
  CHECK(projected != base);
  dim.common_dim = 98;
  CHECK(config_digest(ab, dim, t) != projected);

  FusionConfig sep = f;
  sep.within_source = WithinSource::kSeparate;  // no window, no effect
  CHECK(config_digest(ab, sep, t) == base);
  sep.default_layers = {LayerMode::kLastN, 2};
  FusionConfig cat = sep;
  cat.within_source = WithinSource::kConcat;
  CHECK(config_digest(ab, sep, t) != config_digest(ab, cat, t));

  FusionConfig override_b = f;
  override_b.layers["B"] = {LayerMode::kTruncate, 1};
  CHECK(config_digest(ab, override_b, t) != base);
  CHECK(config_digest(a, override_b, t) == config_digest(a, f, t));
}

TEST_CASE("grid settings") {
  FusionConfig base;
  base.aggregator = Aggregator::kAttention;
  base.normalize = true;
  CHECK(!grid_setting(base, "full", Json()).normalize);
  CHECK(grid_setting(base, "full", Json()).aggregator == Aggregator::kAttention);
  CHECK(grid_setting(base, "norm", Json()).normalize);
  const FusionConfig t = grid_setting(base, "trunc", Json(2));
  CHECK(t.default_layers == LayerSelection{LayerMode::kTruncate, 2});
  const FusionConfig per =
      grid_setting(base, "trunc", Json::parse(R"({"*": 3, "NER": 5})"));
  CHECK(per.default_layers == LayerSelection{LayerMode::kTruncate, 3});
  CHECK(per.layers.at("NER") == LayerSelection{LayerMode::kTruncate, 5});
  const FusionConfig c = grid_setting(base, "concat4", Json());
  CHECK(c.default_layers == LayerSelection{LayerMode::kLastN, 4});
  CHECK_THROWS_AS(grid_setting(base, "trunc", Json()), ConfigError);
  CHECK_THROWS_AS(grid_setting(base, "trunc", Json(0)), ConfigError);
  CHECK_THROWS_AS(grid_setting(base, "concat0", Json()), ConfigError);
  CHECK_THROWS_AS(grid_setting(base, "bogus", Json()), ConfigError);
}

TEST_CASE("experiment config parsing") {
  const ExperimentConfig c = experiment_config_from_json(
      Json::parse(train_config("runs/x")), "/base");
  CHECK(c.bank == fs::path("/base/data"));
  CHECK(c.out == fs::path("/base/runs/x"));
  CHECK(c.fusion.aggregator == Aggregator::kAttention);
  CHECK(c.train.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.probe_reference == "A");
  CHECK(c.probe.n_batches == 3);
  CHECK_THROWS_AS(experiment_config_from_json(Json::parse(R"({"bogus": 1})"), "/"),
                  ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(
                      Json::parse(R"({"fusion": {"aggregator": "max"}})"), "/"),
                  ConfigError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("synthetic generation is reproducible") {
  const fs::path a = workspace("gen_a");
  const fs::path b = workspace("gen_b");
  const auto ta = tree(a / "data"), tb = tree(b / "data");
  CHECK(ta == tb);
  CHECK(ta.count("corpus.jsonl") == 1);
  const EmbeddingBank bank = load_bank(a / "data");
  REQUIRE(bank.sources().size() == 2);
  CHECK(bank.sources()[0].n_layers == 2);
  CHECK(bank.documents().size() == 12);

  CommandOptions o;
  o.config = a / "spec.json";
  o.out = a / "other";
  o.seed = 99;
  o.quiet = true;
  std::ostringstream log;
  cmd_gen_synth(o, log);
  CHECK(tree(a / "other") != ta);
}

TEST_CASE("train, eval, report and probe") {
  const fs::path dir = workspace("train");
  put(dir / "exp.json", train_config("run"));
  std::ostringstream log;
  const auto results = cmd_train(quiet(dir / "exp.json"), log);
  REQUIRE(results.size() == 2);
  for (const char* f : {"model_seed1.json", "history_seed1.jsonl", "predictions_seed1.jsonl",
                        "trajectory_seed1.csv", "result_seed2.json", "summary.json"})
    CHECK(fs::exists(dir / "run" / f));

  // Re-evaluating the saved model reproduces the recorded dev score.
  const MetricReport eval = cmd_eval(quiet(dir / "exp.json"), log);
  CHECK(eval.conll_f1 == results[0].dev.conll_f1);
  CommandOptions seed2 = quiet(dir / "exp.json");
  seed2.model = dir / "run" / "model_seed2.json";
  CHECK(cmd_eval(seed2, log).conll_f1 == results[1].dev.conll_f1);

  // A model trained under a different configuration is refused.
  put(dir / "mean.json", train_config("run", "mean"));
  CommandOptions mismatch = quiet(dir / "mean.json");
  mismatch.model = dir / "run" / "model_seed1.json";
  CHECK_THROWS_AS(cmd_eval(mismatch, log), CompatibilityError);

  const std::string summary = slurp(dir / "run" / "summary.json");
  fs::remove(dir / "run" / "summary.json");
  cmd_report(quiet(dir / "exp.json"), log);
  CHECK(slurp(dir / "run" / "summary.json") == summary);
  CHECK(fs::exists(dir / "run" / "trajectory_seed2.json"));

  const CosineReport probe = cmd_probe(quiet(dir / "exp.json"), log);
  REQUIRE(probe.entries.size() == 2);
  CHECK(probe.entries[0].mean_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(probe.entries[0].n_tokens == 24);
  CHECK(fs::exists(dir / "run" / "probe.csv"));
  CommandOptions unknown = quiet(dir / "exp.json");
  unknown.reference = "ZZZ";
  CHECK_THROWS_AS(cmd_probe(unknown, log), LookupError);

  // Dev predictions scored against the gold corpus: docs outside the dev
  // split count as empty predictions, so recall can only drop.
  CommandOptions score;
  score.gold = dir / "data" / "corpus.jsonl";
  score.pred = dir / "run" / "predictions_seed1.jsonl";
  score.quiet = true;
  const MetricReport full = cmd_score(score, log);
  CHECK(full.muc.recall <= eval.muc.recall);
  CHECK(full.muc.precision == eval.muc.precision);
}

TEST_CASE("training output is deterministic") {
  const fs::path dir = workspace("determinism");
  put(dir / "one.json", train_config("one"));
  put(dir / "two.json", train_config("two"));
  std::ostringstream log;
  cmd_train(quiet(dir / "one.json"), log);
  cmd_train(quiet(dir / "two.json"), log);
  for (const char* f : {"history_seed1.jsonl", "history_seed2.jsonl", "model_seed1.json",
                        "predictions_seed2.jsonl"})
    CHECK(slurp(dir / "one" / f) == slurp(dir / "two" / f));
  for (const char* f : {"result_seed1.json", "result_seed2.json"})
    CHECK(without_clock(Json::parse(slurp(dir / "one" / f))) ==
          without_clock(Json::parse(slurp(dir / "two" / f))));
}

TEST_CASE("grid runs every cell and isolates failures") {
  const fs::path dir = workspace("grid");
  Json g = Json::parse(train_config("grid", "mean"));
  g["train"]["seeds"] = {1};
  g["subsets"] = Json::parse(R"([["A"], ["A", "B"], ["ZZZ"]])");
  g["aggregators"] = {"mean", "attention"};
  g["settings"] = {"full", "trunc"};
  g["truncate_layers"] = 1;
  put(dir / "grid.json", g.dump());
  std::ostringstream log;
  cmd_grid(quiet(dir / "grid.json"), log);
  const Json out = Json::parse(slurp(dir / "grid" / "grid.json"));
  CHECK(out["cells"].size() == 12);
  CHECK(out["failures"] == 4);
  CHECK(out["columns"] ==
        Json::parse(R"(["mean/full", "mean/trunc", "attention/full", "attention/trunc"])"));
  for (const Json& cell : out["cells"]) {
    const bool bad = cell["subset"][0] == "ZZZ";
    CHECK(cell.contains("error") == bad);
    CHECK(cell.contains("conll_f1") == !bad);
  }
  CHECK(fs::exists(dir / "grid" / "cells" / "A+B" / "attention_trunc" / "result_seed1.json"));
  const std::string csv = slurp(dir / "grid" / "grid.csv");
  CHECK(csv.rfind("subset,mean/full,mean/trunc,attention/full,attention/trunc\n", 0) == 0);
  CHECK(csv.find("\nZZZ,,,,\n") != std::string::npos);
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = workspace("cli");
  put(dir / "exp.json", train_config("run"));
  put(dir / "bad.json", R"({"fusion": {"aggregator": "max"}})");
  const std::string d = dir.string();
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("gen-synth --config " + d + "/spec.json --out " + d + "/gen --quiet") == 0);
  CHECK(run_cli("train --config " + d + "/bad.json") == 1);
  CHECK(run_cli("train --config " + d + "/missing.json") == 2);
  CHECK(run_cli("probe --config " + d + "/exp.json --reference ZZZ") == 1);
  CHECK(run_cli("probe --config " + d + "/exp.json --quiet") == 0);
  CHECK(run_cli("eval --config " + d + "/exp.json") == 2);  // no model trained yet
}
