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

#include "rprobe/trainer.h"

#include <cmath>
#include <sstream>
#include <utility>

#include "rprobe/adam.h"
#include "rprobe/errors.h"
#include "rprobe/rng.h"

namespace rprobe {
namespace {

struct PreparedDoc {
  const CorefDocument* doc;
  std::vector<Slot> slots;
};

std::vector<PreparedDoc> Prepare(const CorefModel& model,
                                 const EmbeddingBank& bank,
                                 const std::vector<const CorefDocument*>& docs) {
  std::vector<PreparedDoc> out;
  out.reserve(docs.size());
  for (const CorefDocument* d : docs)
    out.push_back({d, model.PrepareSlots(bank, d->doc_id)});
  return out;
}

Evaluation EvaluatePrepared(const CorefModel& model,
                            const std::vector<PreparedDoc>& docs) {
  Evaluation out;
  MetricAccumulator acc;
  std::vector<double> alpha_sum;
  double n_tokens = 0.0;
  for (const PreparedDoc& p : docs) {
    Tape tape;
    CorefModel::Forward f = model.Run(tape, p.slots, nullptr);
    acc.Add(p.doc->clusters, f.head.predicted);
    out.predictions.push_back({p.doc->doc_id, f.head.predicted});
    if (f.alphas) {
      const Matrix& a = *f.alphas;
      alpha_sum.resize(a.cols(), 0.0);
      for (std::size_t t = 0; t < a.rows(); ++t)
        for (std::size_t k = 0; k < a.cols(); ++k) alpha_sum[k] += a(t, k);
      n_tokens += static_cast<double>(a.rows());
    }
  }
  out.report = acc.Report();
  if (n_tokens > 0.0) {
    for (double& s : alpha_sum) s /= n_tokens;
    out.alpha_means = std::move(alpha_sum);
  }
  return out;
}

double MeanLoss(const CorefModel& model, const std::vector<PreparedDoc>& docs) {
  double total = 0.0;
  for (const PreparedDoc& p : docs) {
    Tape tape;
    CorefModel::Forward f = model.Run(tape, p.slots, &p.doc->clusters);
    total += tape.value(*f.head.loss)(0, 0);
  }
  return docs.empty() ? 0.0 : total / static_cast<double>(docs.size());
}

double NumberField(const Json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) {
    throw ConfigError(std::string("train.") + key + " must be a number");
  }
  return j[key].get<double>();
}

std::size_t CountField(const Json& j, const char* key, std::size_t fallback,
                       bool allow_zero) {
  if (!j.contains(key)) return fallback;
  const auto n = json_count(j[key], allow_zero ? 0 : 1);
  if (!n) {
    throw ConfigError(std::string("train.") + key +
                      (allow_zero ? " must be a non-negative integer"
                                  : " must be a positive integer"));
  }
  return *n;
}

}  // namespace

bool EarlyStopping::Update(std::size_t epoch, double score) {
  if (!seen_ || score > best_score_) {
    seen_ = true;
    best_epoch_ = epoch;
    best_score_ = score;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

TrainConfig train_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("train must be an object");
  check_known_keys(j,
                   {"learning_rate", "max_epochs", "patience", "seeds", "clip_norm",
                    "max_span_width", "hidden_size", "width_dim", "prune_ratio",
                    "max_antecedents"},
                   "train");
  TrainConfig c;
  c.learning_rate = NumberField(j, "learning_rate", c.learning_rate);
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("train.learning_rate must be positive");
  }
  c.clip_norm = NumberField(j, "clip_norm", c.clip_norm);
  if (!(c.clip_norm >= 0.0) || !std::isfinite(c.clip_norm)) {
    throw ConfigError("train.clip_norm must be non-negative");
  }
  c.max_epochs = CountField(j, "max_epochs", c.max_epochs, false);
  c.patience = CountField(j, "patience", c.patience, false);
  if (j.contains("seeds")) {
    const Json& s = j["seeds"];
    if (!s.is_array() || s.empty()) {
      throw ConfigError("train.seeds must be a non-empty array");
    }
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto seed = json_count(s[i], 0);
      if (!seed) {
        throw ConfigError("train.seeds[" + std::to_string(i) +
                          "] must be a non-negative integer");
      }
      c.seeds.push_back(*seed);
    }
  }
  Json head = Json::object();
  for (const char* key : {"max_span_width", "hidden_size", "width_dim",
                          "prune_ratio", "max_antecedents"}) {
    if (j.contains(key)) head[key] = j[key];
  }
  try {
    c.head = head_config_from_json(head);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train.") + e.what());
  }
  return c;
}

Json to_json(const TrainConfig& c) {
  Json j = to_json(c.head);
  j["learning_rate"] = c.learning_rate;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seeds"] = c.seeds;
  j["clip_norm"] = c.clip_norm;
  return j;
}

Json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"dev_conll_f1", r.dev_conll_f1},
          {"alpha_means", r.alpha_means},
          {"stopped", r.stopped}};
}

EpochRecord epoch_record_from_json(const Json& j) {
  try {
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.dev_conll_f1 = j.at("dev_conll_f1").get<double>();
    r.alpha_means = j.at("alpha_means").get<std::vector<double>>();
    r.stopped = j.at("stopped").get<bool>();
    return r;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed history record: ") + e.what());
  }
}

std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const EpochRecord& r : history) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<EpochRecord> history_from_jsonl(const std::string& text) {
  std::vector<EpochRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ValidationError("history line " + std::to_string(line_no) +
                            ": " + e.what());
    }
    out.push_back(epoch_record_from_json(j));
  }
  return out;
}

Split split_corpus(const std::vector<CorefDocument>& corpus) {
  if (corpus.empty()) throw ConfigError("corpus is empty");
  bool explicit_split = false;
  for (const CorefDocument& d : corpus) explicit_split |= !d.split.empty();
  Split s;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const bool dev = explicit_split ? corpus[i].split == "dev" : i % 5 == 4;
    (dev ? s.dev : s.train).push_back(&corpus[i]);
  }
  if (s.train.empty()) throw ConfigError("corpus has no training documents");
  if (s.dev.empty()) throw ConfigError("corpus has no dev documents");
  return s;
}

void check_corpus_matches_bank(const std::vector<CorefDocument>& corpus,
                               const EmbeddingBank& bank) {
  for (const CorefDocument& d : corpus) {
    if (!bank.HasDocument(d.doc_id)) {
      throw CompatibilityError("document '" + d.doc_id +
                               "' is missing from the bank");
    }
    const std::size_t n = bank.documents()[bank.DocumentIndex(d.doc_id)].n_tokens;
    if (n != d.tokens.size()) {
      throw CompatibilityError("document '" + d.doc_id + "' has " +
                               std::to_string(d.tokens.size()) +
                               " tokens in the corpus but " + std::to_string(n) +
                               " in the bank");
    }
  }
}

Evaluation evaluate(const CorefModel& model, const EmbeddingBank& bank,
                    const std::vector<const CorefDocument*>& docs) {
  return EvaluatePrepared(model, Prepare(model, bank, docs));
}

TrainResult train(const std::vector<CorefDocument>& corpus,
                  const EmbeddingBank& bank,
                  const std::vector<std::string>& sources,
                  const FusionConfig& fusion, const TrainConfig& config,
                  std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  const Split split = split_corpus(corpus);
  check_corpus_matches_bank(corpus, bank);
  CorefModel model = CorefModel::Create(bank, sources, fusion, config.head, seed);
  const auto train_docs = Prepare(model, bank, split.train);
  const auto dev_docs = Prepare(model, bank, split.dev);

  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  AdamState state = AdamState::ZerosLike(model.store().values());
  Rng order_rng = Rng::Derive(seed, "train/order");

  std::vector<EpochRecord> history;
  Evaluation initial = EvaluatePrepared(model, dev_docs);
  history.push_back({0, MeanLoss(model, train_docs), initial.report.conll_f1,
                     initial.alpha_means, false});
  if (on_epoch) on_epoch(history.back());
  EarlyStopping stopping(config.patience);
  stopping.Update(0, initial.report.conll_f1);
  std::vector<Matrix> best_params = model.store().values();
  MetricReport best_dev = initial.report;

  std::vector<std::size_t> order(train_docs.size());
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.Shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t i : order) {
      const PreparedDoc& p = train_docs[i];
      Tape tape;
      CorefModel::Forward f = model.Run(tape, p.slots, &p.doc->clusters);
      loss_sum += tape.value(*f.head.loss)(0, 0);
      if (f.head.pruned.empty()) continue;
      tape.Backward(*f.head.loss);
      std::vector<Matrix> grads = f.params.Gradients(tape);
      if (config.clip_norm > 0.0) clip_global_norm(grads, config.clip_norm);
      adam_step(model.store().values(), grads, state, adam);
    }
    Evaluation dev = EvaluatePrepared(model, dev_docs);
    history.push_back({epoch, loss_sum / static_cast<double>(order.size()),
                       dev.report.conll_f1, dev.alpha_means, false});
    if (on_epoch) on_epoch(history.back());
    if (stopping.Update(epoch, dev.report.conll_f1)) {
      best_dev = dev.report;
      best_params = model.store().values();
    } else if (stopping.ShouldStop()) {
      break;
    }
  }
  history.back().stopped = true;
  model.store().values() = std::move(best_params);
  return {std::move(model), std::move(history), stopping.best_epoch(), best_dev};
}

}  // namespace rprobe
