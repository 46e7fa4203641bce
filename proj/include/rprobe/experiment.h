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

// Experiment configuration and the command implementations behind the
// `rprobe` executable. Each cmd_* function reads its inputs from disk,
// writes its outputs atomically under the output directory and returns
// normally, or throws an rprobe::Error.

#ifndef RPROBE_EXPERIMENT_H_
#define RPROBE_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rprobe/bank.h"
#include "rprobe/fusion.h"
#include "rprobe/metrics.h"
#include "rprobe/probes.h"
#include "rprobe/trainer.h"
#include "rprobe/util.h"

namespace rprobe {

struct ExperimentConfig {
  std::filesystem::path bank;
  std::filesystem::path corpus;
  std::filesystem::path out;  // empty when the config names none
  // Empty means every bank source, in manifest order.
  std::vector<std::string> sources;
  FusionConfig fusion;
  TrainConfig train;
  std::string probe_reference;
  ProbeOptions probe;
};

// Relative paths resolve against `base_dir`. Throws ConfigError naming the
// offending key.
ExperimentConfig experiment_config_from_json(const Json& j,
                                             const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Fills an empty source list from the bank and checks that every named
// source exists (ConfigError otherwise).
std::vector<std::string> resolve_sources(const ExperimentConfig& config,
                                         const EmbeddingBank& bank);

// 16 hex digits over the fields that change what a run computes: sources,
// fusion and training hyperparameters. Paths, seeds, output location and
// probe settings are excluded, as is common_dim when projection is off.
std::string config_digest(const std::vector<std::string>& sources,
                          const FusionConfig& fusion, const TrainConfig& train);

struct RunResult {
  std::string digest;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  MetricReport dev;
  std::vector<std::string> slot_labels;
  double wall_clock_seconds = 0.0;
};

Json to_json(const RunResult& result);
RunResult run_result_from_json(const Json& j);

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  // eval: model file; defaults to <out>/model_seed<k>.json.
  std::filesystem::path model;
  // score: gold corpus and predicted clusterings.
  std::filesystem::path gold;
  std::filesystem::path pred;
  // probe: overrides the config's reference source.
  std::string reference;
};

void cmd_gen_synth(const CommandOptions& options, std::ostream& log);
std::vector<RunResult> cmd_train(const CommandOptions& options, std::ostream& log);
MetricReport cmd_eval(const CommandOptions& options, std::ostream& log);
CosineReport cmd_probe(const CommandOptions& options, std::ostream& log);
void cmd_grid(const CommandOptions& options, std::ostream& log);
MetricReport cmd_score(const CommandOptions& options, std::ostream& log);
void cmd_report(const CommandOptions& options, std::ostream& log);

// Fusion settings of one grid column: "full", "norm", "trunc" or
// "concat<n>". `truncate_layers` maps source names (or "*") to the layer
// used by "trunc".
FusionConfig grid_setting(const FusionConfig& base, const std::string& setting,
                          const Json& truncate_layers);

}  // namespace rprobe

#endif  // RPROBE_EXPERIMENT_H_
