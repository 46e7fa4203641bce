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

// rprobe command-line entry point. Exit codes: 0 success, 1 invalid input
// (configuration, file format, compatibility or lookup errors), 2 any other
// failure.

#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rprobe/errors.h"
#include "rprobe/experiment.h"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rprobe: embedding fusion and coreference probing toolkit"};
  app.require_subcommand(1);

  rprobe::CommandOptions opts;
  std::string config, out, model, gold, pred;
  std::uint64_t seed = 0;
  std::function<void()> action;

  auto add = [&](const std::string& name, const std::string& help,
                 std::function<void()> run) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON config file");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "override the configured seed(s)");
    sub->add_flag("--quiet", opts.quiet, "suppress progress output");
    sub->callback([&action, run] { action = run; });
    return sub;
  };

  add("gen-synth", "generate a synthetic bank and corpus from a spec",
      [&] { rprobe::cmd_gen_synth(opts, std::cout); });
  add("train", "train one model per seed and write results",
      [&] { rprobe::cmd_train(opts, std::cout); });
  add("eval", "evaluate a saved model on the dev split",
      [&] { rprobe::cmd_eval(opts, std::cout); })
      ->add_option("--model", model, "model file (default <out>/model_seed<k>.json)");
  add("probe", "cosine similarity of each source to a reference source",
      [&] { rprobe::cmd_probe(opts, std::cout); })
      ->add_option("--reference", opts.reference, "reference source name");
  add("grid", "run a subsets x settings x aggregators grid",
      [&] { rprobe::cmd_grid(opts, std::cout); });
  CLI::App* score = add("score", "score predicted clusters against gold",
                        [&] { rprobe::cmd_score(opts, std::cout); });
  score->add_option("--gold", gold, "gold corpus or clusterings (JSON-lines)");
  score->add_option("--pred", pred, "predicted clusterings (JSON-lines)");
  add("report", "aggregate result files in an output directory",
      [&] { rprobe::cmd_report(opts, std::cout); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  opts.config = config;
  opts.out = out;
  opts.model = model;
  opts.gold = gold;
  opts.pred = pred;
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) opts.seed = seed;
  }

  try {
    action();
  } catch (const rprobe::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const rprobe::LookupError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
