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

// Training loop with per-document Adam steps and early stopping on dev
// CoNLL F1.
//
// Epoch 0 evaluates the freshly initialized model; epochs 1..max_epochs
// each make one pass over the shuffled training documents. An epoch
// improves when its dev F1 is strictly greater than the best so far. After
// `patience` consecutive epochs without improvement, or at max_epochs,
// training stops and the best epoch's parameters are returned.

#ifndef RPROBE_TRAINER_H_
#define RPROBE_TRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rprobe/bank.h"
#include "rprobe/corpus.h"
#include "rprobe/fusion.h"
#include "rprobe/metrics.h"
#include "rprobe/model.h"
#include "rprobe/util.h"

namespace rprobe {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // Global gradient-norm cap per step; 0 disables clipping.
  double clip_norm = 1.0;
  HeadConfig head;
};

// Flat keys: learning_rate, max_epochs, patience, seeds, clip_norm, plus the
// HeadConfig keys. Throws ConfigError naming the offending field.
TrainConfig train_config_from_json(const Json& j);
Json to_json(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_conll_f1 = 0.0;
  // Mean attention weight per slot over dev tokens; empty without attention.
  std::vector<double> alpha_means;
  bool stopped = false;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

Json to_json(const EpochRecord& record);
EpochRecord epoch_record_from_json(const Json& j);
// One JSON object per line.
std::string history_to_jsonl(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> history_from_jsonl(const std::string& text);

struct Split {
  std::vector<const CorefDocument*> train;
  std::vector<const CorefDocument*> dev;
};

// Explicit "split" fields when any document carries one, otherwise every
// fifth document (index % 5 == 4) is dev. Throws ConfigError when either
// side is empty.
Split split_corpus(const std::vector<CorefDocument>& corpus);

// Throws CompatibilityError when a document is missing from the bank or
// its token count disagrees with the manifest.
void check_corpus_matches_bank(const std::vector<CorefDocument>& corpus,
                               const EmbeddingBank& bank);

struct Evaluation {
  MetricReport report;
  std::vector<double> alpha_means;
  std::vector<ScoredDocument> predictions;
};

Evaluation evaluate(const CorefModel& model, const EmbeddingBank& bank,
                    const std::vector<const CorefDocument*>& docs);

// Patience bookkeeping over a stream of dev scores, starting with epoch 0.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Records `score` for `epoch`; true when it strictly beats every earlier
  // score.
  bool Update(std::size_t epoch, double score);
  bool ShouldStop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }

 private:
  std::size_t patience_;
  bool seen_ = false;
  std::size_t best_epoch_ = 0;
  double best_score_ = 0.0;
  std::size_t since_best_ = 0;
};

struct TrainResult {
  CorefModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  MetricReport best_dev;
};

// `on_epoch` receives each history row as soon as it is computed, before the
// last row is flagged `stopped`.
TrainResult train(const std::vector<CorefDocument>& corpus,
                  const EmbeddingBank& bank,
                  const std::vector<std::string>& sources,
                  const FusionConfig& fusion, const TrainConfig& config,
                  std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace rprobe

#endif  // RPROBE_TRAINER_H_
