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

#include "rprobe/experiment.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <ostream>
#include <regex>
#include <set>

#include "rprobe/corpus.h"
#include "rprobe/errors.h"
#include "rprobe/rng.h"
#include "rprobe/synthetic.h"

namespace fs = std::filesystem;

namespace rprobe {
namespace {

fs::path ResolvePath(const Json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  if (!j[key].is_string()) {
    throw ConfigError(std::string(key) + " must be a path string");
  }
  fs::path p = j[key].get<std::string>();
  return p.is_absolute() ? p : base / p;
}

fs::path OutputDir(const CommandOptions& options, const ExperimentConfig* config) {
  if (!options.out.empty()) return options.out;
  if (config && !config->out.empty()) return config->out;
  throw ConfigError("no output directory: pass --out or set \"out\"");
}

void RequireInput(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("config is missing \"") + key + "\"");
}

std::string Percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * x);
  return buf;
}

std::string SeedSuffix(std::uint64_t seed) { return "_seed" + std::to_string(seed); }

std::string PredictionsJsonl(const std::vector<ScoredDocument>& docs) {
  std::string out;
  for (const ScoredDocument& d : docs) {
    out += Json{{"doc_id", d.doc_id}, {"clusters", clustering_to_json(d.clusters)}}
               .dump() +
           "\n";
  }
  return out;
}

Json Summarize(const std::string& digest, const std::vector<RunResult>& runs) {
  std::vector<double> f1;
  Json per_seed = Json::array();
  for (const RunResult& r : runs) {
    f1.push_back(100.0 * r.dev.conll_f1);
    per_seed.push_back({{"seed", r.seed},
                        {"best_epoch", r.best_epoch},
                        {"dev_conll_f1", r.dev.conll_f1}});
  }
  const RunAggregate agg = aggregate_runs(f1);
  Json metrics = Json::object();
  auto add = [&](const char* name, auto get) {
    std::vector<double> v;
    for (const RunResult& r : runs) v.push_back(100.0 * get(r.dev));
    const RunAggregate a = aggregate_runs(v);
    metrics[name] = {{"mean", a.mean}, {"stddev", a.stddev},
                     {"formatted", format_aggregate(a)}};
  };
  add("muc_f1", [](const MetricReport& m) { return m.muc.f1; });
  add("b3_f1", [](const MetricReport& m) { return m.b3.f1; });
  add("ceaf_m_f1", [](const MetricReport& m) { return m.ceaf_m.f1; });
  add("ceaf_e_f1", [](const MetricReport& m) { return m.ceaf_e.f1; });
  return {{"digest", digest},
          {"n_runs", runs.size()},
          {"conll_f1", {{"mean", agg.mean},
                        {"stddev", agg.stddev},
                        {"formatted", format_aggregate(agg)}}},
          {"metrics", metrics},
          {"runs", per_seed}};
}

struct LoadedData {
  EmbeddingBank bank;
  std::vector<CorefDocument> corpus;
  std::vector<std::string> sources;
};

LoadedData LoadData(const ExperimentConfig& config) {
  RequireInput(config.bank, "bank");
  RequireInput(config.corpus, "corpus");
  LoadedData d{load_bank(config.bank), read_corpus(config.corpus), {}};
  d.sources = resolve_sources(config, d.bank);
  check_corpus_matches_bank(d.corpus, d.bank);
  split_corpus(d.corpus);
  return d;
}

// Trains every seed and writes per-seed artifacts plus summary.json into
// `out`.
std::vector<RunResult> RunSeeds(const LoadedData& data,
                                const FusionConfig& fusion,
                                const TrainConfig& train_config,
                                const std::vector<std::uint64_t>& seeds,
                                const fs::path& out, bool quiet,
                                std::ostream& log) {
  const std::string digest = config_digest(data.sources, fusion, train_config);
  const Split split = split_corpus(data.corpus);
  std::vector<RunResult> results;
  for (std::uint64_t seed : seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    auto on_epoch = [&](const EpochRecord& r) {
      if (!quiet) {
        log << "seed " << seed << " epoch " << r.epoch << " loss "
            << r.train_loss << " dev CoNLL F1 " << Percent(r.dev_conll_f1)
            << "\n";
      }
    };
    TrainResult tr = train(data.corpus, data.bank, data.sources, fusion,
                           train_config, seed, on_epoch);
    tr.model.set_digest(digest);
    const Evaluation best = evaluate(tr.model, data.bank, split.dev);
    const auto t1 = std::chrono::steady_clock::now();

    RunResult r;
    r.digest = digest;
    r.seed = seed;
    r.best_epoch = tr.best_epoch;
    r.epochs_run = tr.history.back().epoch;
    r.dev = tr.best_dev;
    r.slot_labels = tr.model.SlotLabels();
    r.wall_clock_seconds = std::chrono::duration<double>(t1 - t0).count();

    const std::string sfx = SeedSuffix(seed);
    write_json_file(out / ("model" + sfx + ".json"), tr.model.ToJson());
    write_file_atomic(out / ("history" + sfx + ".jsonl"),
                      history_to_jsonl(tr.history));
    write_file_atomic(out / ("predictions" + sfx + ".jsonl"),
                      PredictionsJsonl(best.predictions));
    if (fusion.aggregator == Aggregator::kAttention) {
      const AttentionTrajectory traj = attention_trajectory(tr.history);
      write_file_atomic(out / ("trajectory" + sfx + ".csv"),
                        trajectory_csv(traj, r.slot_labels));
    }
    write_json_file(out / ("result" + sfx + ".json"), to_json(r));
    if (!quiet) {
      log << "seed " << seed << ": best epoch " << r.best_epoch
          << ", dev CoNLL F1 " << Percent(r.dev.conll_f1) << "\n";
    }
    results.push_back(std::move(r));
  }
  write_json_file(out / "summary.json", Summarize(digest, results));
  return results;
}

std::vector<std::uint64_t> SeedsFor(const CommandOptions& options,
                                    const TrainConfig& train) {
  if (options.seed) return {*options.seed};
  return train.seeds;
}

std::vector<std::string> StringList(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) {
      throw ConfigError(where + "[" + std::to_string(i) + "] must be a string");
    }
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ExperimentConfig experiment_config_from_json(const Json& j,
                                             const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  // Experiment, grid and score files share one schema.
  check_known_keys(j,
                   {"bank", "corpus", "out", "sources", "fusion", "train", "probe",
                    "subsets", "aggregators", "settings", "truncate_layers", "gold",
                    "pred"},
                   "");
  ExperimentConfig c;
  c.bank = ResolvePath(j, "bank", base_dir);
  c.corpus = ResolvePath(j, "corpus", base_dir);
  c.out = ResolvePath(j, "out", base_dir);
  if (j.contains("sources")) {
    c.sources = StringList(j["sources"], "sources");
    if (c.sources.empty()) throw ConfigError("sources must not be empty");
    std::set<std::string> seen;
    for (const std::string& s : c.sources) {
      if (!seen.insert(s).second) {
        throw ConfigError("sources lists '" + s + "' twice");
      }
    }
  }
  c.fusion = fusion_config_from_json(j.value("fusion", Json::object()));
  c.train = train_config_from_json(j.value("train", Json::object()));
  if (j.contains("probe")) {
    const Json& p = j["probe"];
    if (!p.is_object()) throw ConfigError("probe must be an object");
    check_known_keys(p, {"reference", "n_batches", "batch_size", "seed"}, "probe");
    try {
      c.probe_reference = p.value("reference", "");
      c.probe.n_batches = p.value("n_batches", c.probe.n_batches);
      c.probe.batch_size = p.value("batch_size", c.probe.batch_size);
      c.probe.seed = p.value("seed", c.probe.seed);
    } catch (const Json::type_error& e) {
      throw ConfigError(std::string("probe: wrong value type: ") + e.what());
    }
    if (c.probe.n_batches < 1 || c.probe.batch_size < 1) {
      throw ConfigError("probe.n_batches and probe.batch_size must be >= 1");
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (path.empty()) throw ConfigError("no config file: pass --config");
  return experiment_config_from_json(read_json_file(path),
                                     fs::absolute(path).parent_path());
}

std::vector<std::string> resolve_sources(const ExperimentConfig& config,
                                         const EmbeddingBank& bank) {
  if (config.sources.empty()) {
    std::vector<std::string> all;
    for (const SourceDescriptor& s : bank.sources()) all.push_back(s.name);
    return all;
  }
  for (const std::string& s : config.sources) {
    if (!bank.HasSource(s)) {
      throw ConfigError("source '" + s + "' is not in the bank manifest");
    }
  }
  return config.sources;
}

std::string config_digest(const std::vector<std::string>& sources,
                          const FusionConfig& fusion, const TrainConfig& train) {
  std::vector<std::string> sorted = sources;
  std::sort(sorted.begin(), sorted.end());
  const LayerSpec spec = fusion.ResolveLayers(sorted);
  Json layers = Json::array();
  bool windowed = false;
  for (const auto& [name, sel] : spec.sources) {
    layers.push_back({name, to_json(sel)});
    windowed |= sel.mode == LayerMode::kLastN && sel.value > 1;
  }
  Json f = {{"layers", layers},
            {"normalize", fusion.normalize},
            {"project", fusion.project},
            {"aggregator", to_string(fusion.aggregator)}};
  if (windowed) f["within_source"] = to_string(fusion.within_source);
  if (fusion.project) f["common_dim"] = fusion.common_dim;
  Json t = to_json(train);
  t.erase("seeds");
  const Json canonical = {{"fusion", f}, {"train", t}};
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return buf;
}

Json to_json(const RunResult& r) {
  return {{"digest", r.digest},
          {"seed", r.seed},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run},
          {"dev", to_json(r.dev)},
          {"slots", r.slot_labels},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

RunResult run_result_from_json(const Json& j) {
  try {
    RunResult r;
    r.digest = j.at("digest").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.epochs_run = j.at("epochs_run").get<std::size_t>();
    r.dev = metric_report_from_json(j.at("dev"));
    r.slot_labels = j.at("slots").get<std::vector<std::string>>();
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    return r;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed run result: ") + e.what());
  }
}

void cmd_gen_synth(const CommandOptions& options, std::ostream& log) {
  if (options.config.empty()) throw ConfigError("no spec file: pass --config");
  SyntheticSpec spec = synthetic_spec_from_json(read_json_file(options.config));
  if (options.seed) spec.seed = *options.seed;
  const fs::path out = OutputDir(options, nullptr);
  auto [bank, corpus] = gen_synthetic(spec);
  write_bank(bank, out);
  write_corpus(out / "corpus.jsonl", corpus);
  if (!options.quiet) {
    std::size_t tokens = 0;
    for (const DocumentEntry& d : bank.documents()) tokens += d.n_tokens;
    log << "wrote " << out.string() << ": " << bank.documents().size()
        << " documents, " << tokens << " tokens\n";
    for (const SourceDescriptor& s : bank.sources()) {
      log << "  source " << s.name << ": " << s.n_layers << " layers, dim "
          << s.dim << "\n";
    }
  }
}

std::vector<RunResult> cmd_train(const CommandOptions& options, std::ostream& log) {
  const ExperimentConfig config = load_experiment_config(options.config);
  const fs::path out = OutputDir(options, &config);
  const LoadedData data = LoadData(config);
  std::vector<RunResult> results = RunSeeds(data, config.fusion, config.train,
                                            SeedsFor(options, config.train), out,
                                            options.quiet, log);
  if (!options.quiet) {
    std::vector<double> f1;
    for (const RunResult& r : results) f1.push_back(100.0 * r.dev.conll_f1);
    log << "dev CoNLL F1 over " << results.size()
        << " seed(s): " << format_aggregate(aggregate_runs(f1)) << "\n";
  }
  return results;
}

MetricReport cmd_eval(const CommandOptions& options, std::ostream& log) {
  const ExperimentConfig config = load_experiment_config(options.config);
  const LoadedData data = LoadData(config);
  fs::path model_path = options.model;
  if (model_path.empty()) {
    model_path = OutputDir(options, &config) /
                 ("model" + SeedSuffix(SeedsFor(options, config.train).front()) +
                  ".json");
  }
  const CorefModel model = CorefModel::FromJson(read_json_file(model_path));
  const std::string digest = config_digest(data.sources, config.fusion, config.train);
  if (model.digest() != digest) {
    throw CompatibilityError("model " + model_path.string() + " has digest " +
                             model.digest() + " but the config digest is " +
                             digest);
  }
  const Split split = split_corpus(data.corpus);
  const Evaluation ev = evaluate(model, data.bank, split.dev);
  if (!options.out.empty() || !config.out.empty()) {
    const fs::path out = OutputDir(options, &config);
    write_json_file(out / "eval.json",
                    {{"model", model_path.string()},
                     {"digest", digest},
                     {"dev", to_json(ev.report)}});
  }
  if (!options.quiet) log << format_table(ev.report);
  return ev.report;
}

CosineReport cmd_probe(const CommandOptions& options, std::ostream& log) {
  const ExperimentConfig config = load_experiment_config(options.config);
  RequireInput(config.bank, "bank");
  const EmbeddingBank bank = load_bank(config.bank);
  const std::string reference =
      options.reference.empty() ? config.probe_reference : options.reference;
  if (reference.empty()) {
    throw ConfigError("no reference source: pass --reference or set probe.reference");
  }
  if (!bank.HasSource(reference)) {
    throw LookupError("unknown reference source '" + reference + "'");
  }
  std::vector<std::string> sources = resolve_sources(config, bank);
  if (std::find(sources.begin(), sources.end(), reference) == sources.end()) {
    sources.push_back(reference);
  }
  ProbeOptions probe = config.probe;
  if (options.seed) probe.seed = *options.seed;
  const CosineReport report = cosine_probe(
      bank, reference, config.fusion.ResolveLayers(sources), probe);
  const fs::path out = OutputDir(options, &config);
  write_json_file(out / "probe.json", to_json(report));
  write_file_atomic(out / "probe.csv", cosine_report_csv(report));
  if (!options.quiet) log << cosine_report_csv(report);
  return report;
}

FusionConfig grid_setting(const FusionConfig& base, const std::string& setting,
                          const Json& truncate_layers) {
  FusionConfig c = base;
  c.layers.clear();
  c.normalize = false;
  c.default_layers = {LayerMode::kFinal, 0};
  static const std::regex kConcat("concat([0-9]+)");
  std::smatch m;
  if (setting == "full") {
    return c;
  }
  if (setting == "norm") {
    c.normalize = true;
    return c;
  }
  if (setting == "trunc") {
    if (truncate_layers.is_null()) {
      throw ConfigError("setting \"trunc\" needs truncate_layers");
    }
    auto layer = [&](const Json& v, const std::string& where) {
      const auto l = json_count(v, 1);
      if (!l) throw ConfigError(where + " must be a positive layer number");
      return LayerSelection{LayerMode::kTruncate, *l};
    };
    if (truncate_layers.is_number()) {
      c.default_layers = layer(truncate_layers, "truncate_layers");
    } else if (truncate_layers.is_object()) {
      for (const auto& [name, v] : truncate_layers.items()) {
        const LayerSelection sel = layer(v, "truncate_layers." + name);
        if (name == "*") {
          c.default_layers = sel;
        } else {
          c.layers[name] = sel;
        }
      }
    } else {
      throw ConfigError("truncate_layers must be a number or an object");
    }
    return c;
  }
  if (std::regex_match(setting, m, kConcat)) {
    const std::size_t n = std::stoul(m[1].str());
    if (n < 1) throw ConfigError("concat window must be >= 1");
    c.default_layers = {LayerMode::kLastN, n};
    c.within_source = WithinSource::kConcat;
    return c;
  }
  throw ConfigError("unknown grid setting '" + setting +
                    "' (expected full, norm, trunc or concat<n>)");
}

void cmd_grid(const CommandOptions& options, std::ostream& log) {
  if (options.config.empty()) throw ConfigError("no grid file: pass --config");
  const Json j = read_json_file(options.config);
  const ExperimentConfig base =
      experiment_config_from_json(j, fs::absolute(options.config).parent_path());
  const fs::path out = OutputDir(options, &base);

  std::vector<std::vector<std::string>> subsets;
  if (!j.contains("subsets")) throw ConfigError("grid is missing \"subsets\"");
  if (!j["subsets"].is_array() || j["subsets"].empty()) {
    throw ConfigError("subsets must be a non-empty array");
  }
  for (std::size_t i = 0; i < j["subsets"].size(); ++i) {
    subsets.push_back(StringList(j["subsets"][i], "subsets[" + std::to_string(i) + "]"));
    if (subsets.back().empty()) {
      throw ConfigError("subsets[" + std::to_string(i) + "] is empty");
    }
  }
  const std::vector<std::string> aggregators =
      StringList(j.value("aggregators", Json::array({"mean"})), "aggregators");
  const std::vector<std::string> settings =
      StringList(j.value("settings", Json::array({"full"})), "settings");
  const Json truncate = j.value("truncate_layers", Json());
  for (const std::string& a : aggregators) aggregator_from_string(a);

  RequireInput(base.bank, "bank");
  RequireInput(base.corpus, "corpus");
  LoadedData data{load_bank(base.bank), read_corpus(base.corpus), {}};
  check_corpus_matches_bank(data.corpus, data.bank);
  const std::vector<std::uint64_t> seeds = SeedsFor(options, base.train);

  std::vector<std::string> columns;
  for (const std::string& a : aggregators)
    for (const std::string& s : settings) columns.push_back(a + "/" + s);

  std::string csv = "subset";
  for (const std::string& col : columns) csv += "," + CsvField(col);
  csv += "\n";
  Json cells = Json::array();
  std::size_t failures = 0;
  for (const auto& subset : subsets) {
    std::string row_name;
    for (const std::string& s : subset) row_name += (row_name.empty() ? "" : "+") + s;
    csv += CsvField(row_name);
    for (const std::string& agg : aggregators) {
      for (const std::string& setting : settings) {
        Json cell = {{"subset", subset}, {"aggregator", agg}, {"setting", setting}};
        const fs::path cell_dir = out / "cells" / row_name / (agg + "_" + setting);
        std::string value;
        try {
          Json fj = j.value("fusion", Json::object());
          fj["aggregator"] = agg;
          const FusionConfig fusion =
              grid_setting(fusion_config_from_json(fj), setting, truncate);
          ExperimentConfig cell_config = base;
          cell_config.sources = subset;
          LoadedData cell_data{data.bank, data.corpus,
                               resolve_sources(cell_config, data.bank)};
          if (!options.quiet) {
            log << "cell " << row_name << " " << agg << "/" << setting << "\n";
          }
          const auto results = RunSeeds(cell_data, fusion, base.train, seeds,
                                        cell_dir, true, log);
          std::vector<double> f1;
          for (const RunResult& r : results) f1.push_back(100.0 * r.dev.conll_f1);
          const RunAggregate a = aggregate_runs(f1);
          value = format_aggregate(a);
          cell["conll_f1"] = {{"mean", a.mean}, {"stddev", a.stddev},
                              {"formatted", value}};
          cell["dir"] = cell_dir.lexically_relative(out).generic_string();
        } catch (const std::exception& e) {
          ++failures;
          cell["error"] = e.what();
          if (!options.quiet) log << "  failed: " << e.what() << "\n";
        }
        csv += "," + CsvField(value);
        cells.push_back(std::move(cell));
      }
    }
    csv += "\n";
  }
  write_file_atomic(out / "grid.csv", csv);
  write_json_file(out / "grid.json",
                  {{"columns", columns},
                   {"seeds", seeds},
                   {"cells", cells},
                   {"failures", failures}});
  if (!options.quiet) log << csv;
}

MetricReport cmd_score(const CommandOptions& options, std::ostream& log) {
  fs::path gold = options.gold;
  fs::path pred = options.pred;
  if (!options.config.empty() && (gold.empty() || pred.empty())) {
    const Json j = read_json_file(options.config);
    const fs::path base = fs::absolute(options.config).parent_path();
    if (gold.empty()) gold = ResolvePath(j, "gold", base);
    if (pred.empty()) pred = ResolvePath(j, "pred", base);
  }
  RequireInput(gold, "gold");
  RequireInput(pred, "pred");
  const MetricReport report =
      score_documents(read_clusterings(gold), read_clusterings(pred));
  if (!options.out.empty()) write_json_file(options.out / "score.json", to_json(report));
  if (!options.quiet) log << format_table(report);
  return report;
}

void cmd_report(const CommandOptions& options, std::ostream& log) {
  fs::path dir = options.out;
  if (dir.empty()) {
    const ExperimentConfig config = load_experiment_config(options.config);
    dir = OutputDir(options, &config);
  }
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex kResult("result_seed([0-9]+)\\.json");
  std::map<std::uint64_t, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, kResult)) files[std::stoull(m[1].str())] = entry.path();
  }
  if (files.empty()) {
    throw MissingDataError("no result_seed<k>.json files in " + dir.string());
  }
  std::vector<RunResult> runs;
  for (const auto& [seed, path] : files) {
    runs.push_back(run_result_from_json(read_json_file(path)));
    const fs::path history = dir / ("history" + SeedSuffix(seed) + ".jsonl");
    if (!fs::exists(history)) continue;
    const auto records = history_from_jsonl(read_text_file(history));
    if (records.empty() || records.front().alpha_means.empty()) continue;
    const AttentionTrajectory traj = attention_trajectory(records);
    write_json_file(dir / ("trajectory" + SeedSuffix(seed) + ".json"),
                    to_json(traj, runs.back().slot_labels));
    write_file_atomic(dir / ("trajectory" + SeedSuffix(seed) + ".csv"),
                      trajectory_csv(traj, runs.back().slot_labels));
  }
  for (const RunResult& r : runs) {
    if (r.digest != runs.front().digest) {
      throw CompatibilityError("results in " + dir.string() +
                               " come from different configurations");
    }
  }
  const Json summary = Summarize(runs.front().digest, runs);
  write_json_file(dir / "summary.json", summary);
  if (!options.quiet) {
    log << "runs: " << runs.size() << "\n";
    log << "CoNLL F1 " << summary["conll_f1"]["formatted"].get<std::string>() << "\n";
    for (const auto& [name, m] : summary["metrics"].items()) {
      log << name << " " << m["formatted"].get<std::string>() << "\n";
    }
  }
}

}  // namespace rprobe
