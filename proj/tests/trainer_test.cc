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

#include <cmath>
#include <string>
#include <vector>

#include "rprobe/errors.h"
#include "rprobe/synthetic.h"
#include "rprobe/trainer.h"
#include "support.h"

using namespace rprobe;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.n_docs = 10;
  spec.tokens_per_doc = 20;
  spec.n_entities = 3;
  spec.seed = 4;
  spec.sources = {{"A", 8, {1.0}, {0.3}}, {"B", 8, {0.0}, {1.0}}};
  return spec;
}

TrainConfig small_train() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.max_epochs = 3;
  c.patience = 3;
  c.seeds = {1};
  c.head.max_span_width = 2;
  c.head.hidden_size = 8;
  c.head.width_dim = 4;
  return c;
}

FusionConfig attention_fusion(bool project) {
  FusionConfig f;
  f.aggregator = Aggregator::kAttention;
  f.project = project;
  f.common_dim = 6;
  return f;
}

const std::vector<std::string> kSources{"A", "B"};

}  // namespace

TEST_CASE("early stopping counts non-improving epochs") {
  EarlyStopping stop(5);
  const std::vector<double> scores{10, 20, 30, 40, 40, 39, 12, 40, 40};
  std::size_t stopped_at = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    stop.Update(e, scores[e]);
    if (stop.ShouldStop()) {
      stopped_at = e;
      break;
    }
  }
  CHECK(stop.best_epoch() == 3);
  CHECK(stop.best_score() == 40);
  CHECK(stopped_at == 8);

  EarlyStopping first(1);
  CHECK(first.Update(0, 0.0));  // the first score always counts
  CHECK(!first.Update(1, 0.0));
  CHECK(first.ShouldStop());
}

TEST_CASE("history round trip") {
  std::vector<EpochRecord> h(3);
  for (std::size_t i = 0; i < 3; ++i) {
    h[i].epoch = i;
    h[i].train_loss = 1.0 / (i + 3);
    h[i].dev_conll_f1 = 0.1 * i + 1e-17;
    h[i].alpha_means = {0.25, 0.75 - 1e-16};
  }
  h.back().stopped = true;
  CHECK(history_from_jsonl(history_to_jsonl(h)) == h);
  CHECK_THROWS_AS(history_from_jsonl("{\"epoch\": \"x\"}\n"), ValidationError);
}

TEST_CASE("train config parsing") {
  const TrainConfig c = train_config_from_json(Json::parse(
      R"({"learning_rate": 0.01, "seeds": [7, 8], "max_span_width": 3, "patience": 2})"));
  CHECK(c.learning_rate == 0.01);
  CHECK(c.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(c.head.max_span_width == 3);
  CHECK(c.patience == 2);
  CHECK(c.max_epochs == 100);
  CHECK_THROWS_AS(train_config_from_json(Json::parse(R"({"learning_rate": -1})")),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(Json::parse(R"({"seeds": []})")), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(Json::parse(R"({"prune_ratio": 1.5})")),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(Json::parse(R"({"lr": 0.1})")), ConfigError);
}

TEST_CASE("dev split") {
  std::vector<CorefDocument> docs(10);
  for (std::size_t i = 0; i < 10; ++i) docs[i].doc_id = "d" + std::to_string(i);
  Split s = split_corpus(docs);
  REQUIRE(s.dev.size() == 2);
  CHECK(s.dev[0]->doc_id == "d4");
  CHECK(s.dev[1]->doc_id == "d9");
  CHECK(s.train.size() == 8);

  docs[0].split = "dev";
  s = split_corpus(docs);
  REQUIRE(s.dev.size() == 1);
  CHECK(s.dev[0]->doc_id == "d0");
  CHECK(s.train.size() == 9);

  std::vector<CorefDocument> tiny(3);
  CHECK_THROWS_AS(split_corpus(tiny), ConfigError);
}

TEST_CASE("corpus and bank must agree") {
  auto [bank, corpus] = gen_synthetic(small_spec());
  CHECK_NOTHROW(check_corpus_matches_bank(corpus, bank));
  auto extra = corpus;
  extra.push_back(corpus[0]);
  extra.back().doc_id = "missing";
  CHECK_THROWS_AS(check_corpus_matches_bank(extra, bank), CompatibilityError);
  auto shorter = corpus;
  shorter[1].tokens.pop_back();
  CHECK_THROWS_AS(check_corpus_matches_bank(shorter, bank), CompatibilityError);
}

TEST_CASE("whole-model gradients") {
  SyntheticSpec spec = small_spec();
  spec.n_docs = 2;
  spec.tokens_per_doc = 8;
  spec.sources = {{"A", 4, {1.0}, {0.3}}, {"B", 3, {0.0}, {1.0}}};
  auto [bank, corpus] = gen_synthetic(spec);
  HeadConfig head;
  head.max_span_width = 2;
  head.hidden_size = 4;
  head.width_dim = 2;
  head.prune_ratio = 0.8;
  FusionConfig fusion = attention_fusion(true);
  fusion.common_dim = 3;
  CorefModel model = CorefModel::Create(bank, kSources, fusion, head, 3);
  // Move the attention scorer off zero so every path carries gradient.
  Rng rng(9);
  for (std::size_t id = 0; id < model.store().size(); ++id)
    if (model.store().name(id).rfind("fusion.", 0) == 0)
      model.store().value(id) = rprobe::testing::random_matrix(
          model.store().value(id).rows(), model.store().value(id).cols(), rng, 0.5);
  for (const CorefDocument& doc : corpus) {
    Tape tape;
    const auto slots = model.PrepareSlots(bank, doc.doc_id);
    const CorefModel::Forward f = model.Run(tape, slots, &doc.clusters);
    REQUIRE(f.head.loss.has_value());
    std::vector<Var> leaves;
    for (std::size_t id = 0; id < model.store().size(); ++id) leaves.push_back(f.params[id]);
    CHECK(rprobe::testing::check_gradients(tape, *f.head.loss, leaves).max_rel_error <= 1e-4);
  }
}

TEST_CASE("zero attention starts where mean starts") {
  auto [bank, corpus] = gen_synthetic(small_spec());
  TrainConfig config = small_train();
  config.max_epochs = 0;
  FusionConfig mean;
  const TrainResult a = train(corpus, bank, kSources, attention_fusion(false), config, 5);
  const TrainResult m = train(corpus, bank, kSources, mean, config, 5);
  REQUIRE(a.history.size() == 1);
  REQUIRE(m.history.size() == 1);
  CHECK(std::abs(a.history[0].dev_conll_f1 - m.history[0].dev_conll_f1) <= 1e-9);
  CHECK(std::abs(a.history[0].train_loss - m.history[0].train_loss) <= 1e-9);
  for (double alpha : a.history[0].alpha_means) CHECK(std::abs(alpha - 0.5) <= 1e-12);
  CHECK(m.history[0].alpha_means.empty());
}

TEST_CASE("training is deterministic and records every epoch") {
  auto [bank, corpus] = gen_synthetic(small_spec());
  const TrainConfig config = small_train();
  std::vector<EpochRecord> seen;
  const TrainResult a = train(corpus, bank, kSources, attention_fusion(true), config, 2,
                              [&](const EpochRecord& r) { seen.push_back(r); });
  const TrainResult b = train(corpus, bank, kSources, attention_fusion(true), config, 2);
  CHECK(a.history == b.history);
  // The callback runs before the final row is marked as the stopping row.
  REQUIRE(seen.size() == a.history.size());
  seen.back().stopped = true;
  CHECK(seen == a.history);
  CHECK(a.model.ToJson() == b.model.ToJson());
  REQUIRE(a.history.size() == 4);
  CHECK(a.history.back().stopped);
  for (std::size_t i = 0; i + 1 < a.history.size(); ++i) CHECK(!a.history[i].stopped);
  double best = -1.0;
  for (const EpochRecord& r : a.history) best = std::max(best, r.dev_conll_f1);
  CHECK(a.history[a.best_epoch].dev_conll_f1 == best);
  CHECK(a.best_dev.conll_f1 == best);

  // The returned model is the best epoch's.
  const Split split = split_corpus(corpus);
  CHECK(evaluate(a.model, bank, split.dev).report.conll_f1 == best);

  const TrainResult c = train(corpus, bank, kSources, attention_fusion(true), config, 3);
  CHECK(c.model.ToJson() != a.model.ToJson());
}

TEST_CASE("model JSON round trip") {
  auto [bank, corpus] = gen_synthetic(small_spec());
  CorefModel model =
      CorefModel::Create(bank, kSources, attention_fusion(true), small_train().head, 1);
  model.set_digest("0123456789abcdef");
  const Json j = model.ToJson();
  const CorefModel back = CorefModel::FromJson(Json::parse(j.dump()));
  CHECK(back.ToJson() == j);
  CHECK(back.digest() == "0123456789abcdef");
  CHECK(back.SlotLabels() == model.SlotLabels());
  const Split split = split_corpus(corpus);
  CHECK(evaluate(back, bank, split.dev).report.conll_f1 ==
        evaluate(model, bank, split.dev).report.conll_f1);

  Json bad = j;
  bad["format_version"] = 99;
  CHECK_THROWS_AS(CorefModel::FromJson(bad), VersionError);
  bad = j;
  bad["parameters"][0]["rows"] = 1000;
  CHECK_THROWS_AS(CorefModel::FromJson(bad), ValidationError);
  bad = j;
  bad["parameters"].erase(0);
  CHECK_THROWS_AS(CorefModel::FromJson(bad), ValidationError);

  // A bank with a different layout is rejected at slot preparation.
  SyntheticSpec other = small_spec();
  other.sources[1].dim = 5;
  auto [other_bank, other_corpus] = gen_synthetic(other);
  CHECK_THROWS_AS(model.PrepareSlots(other_bank, other_corpus[0].doc_id), CompatibilityError);
}
