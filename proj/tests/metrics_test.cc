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

#include "metric_oracles.h"
#include "rprobe/errors.h"
#include "rprobe/metrics.h"
#include "support.h"

using namespace rprobe;
using namespace rprobe::testing;

namespace {

void check_prf(const PRF& m, double p, double r, double f) {
  CHECK(std::abs(m.precision - p) <= 1e-15);
  CHECK(std::abs(m.recall - r) <= 1e-15);
  CHECK(std::abs(m.f1 - f) <= 1e-15);
}

}  // namespace

TEST_CASE("worked example: one gold entity split in two") {
  const Clustering g = worked_gold(), p = worked_pred();
  check_prf(muc(g, p), 1.0, 2.0 / 3.0, 0.8);
  check_prf(b_cubed(g, p), 1.0, 0.5, 2.0 / 3.0);
  check_prf(ceaf(g, p, CeafSimilarity::kEntity), 1.0 / 3.0, 2.0 / 3.0, 4.0 / 9.0);
  check_prf(ceaf(g, p, CeafSimilarity::kMention), 0.5, 0.5, 0.5);
  CHECK(std::abs(conll_f1(0.8, 2.0 / 3.0, 4.0 / 9.0) - 0.637037037037037) <= 1e-12);
  CHECK(conll_f1(1, 1, 1) == 1.0);
  CHECK(conll_f1(0, 0, 0) == 0.0);
}

TEST_CASE("empty and disjoint sides") {
  const Clustering g = worked_gold();
  for (const PRF& m : {muc(g, {}), b_cubed(g, {}), ceaf(g, {}, CeafSimilarity::kEntity),
                       muc({}, {}), ceaf({}, {}, CeafSimilarity::kMention)})
    check_prf(m, 0, 0, 0);
  const Clustering other{{{7, 7}, {8, 8}}};
  check_prf(ceaf(g, other, CeafSimilarity::kEntity), 0, 0, 0);
  check_prf(b_cubed(g, other), 0, 0, 0);
  check_prf(muc(g, other), 0, 0, 0);
}

TEST_CASE("mentions missing from one side") {
  // Gold {a,b,c}; pred {a,b} plus a stray {x,y}.
  const Clustering g{{{0, 0}, {1, 1}, {2, 2}}};
  const Clustering p{{{0, 0}, {1, 1}}, {{8, 8}, {9, 9}}};
  // MUC: c is its own part, so recall (3-2)/2; precision 1/1 + 0/1 over 2.
  check_prf(muc(g, p), 0.5, 0.5, 0.5);
  // B³ recall (2/3 + 2/3 + 0)/3; precision (1 + 1 + 0 + 0)/4.
  const PRF b = b_cubed(g, p);
  CHECK(std::abs(b.recall - 4.0 / 9.0) <= 1e-15);
  CHECK(std::abs(b.precision - 0.5) <= 1e-15);
}

TEST_CASE("hungarian examples") {
  using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(hungarian(Matrix({{1, 2}, {2, 1}})) == Pairs{{0, 0}, {1, 1}});
  CHECK(hungarian(Matrix({{4, 1}, {2, 3}})) == Pairs{{0, 1}, {1, 0}});
  CHECK(hungarian(Matrix()).empty());
  CHECK(hungarian(Matrix({{5, 1, 3}})) == Pairs{{0, 1}});
  CHECK(hungarian(Matrix({{5}, {1}, {3}})) == Pairs{{1, 0}});
  CHECK_THROWS_AS(hungarian(Matrix({{1, NAN}})), DomainError);
}

TEST_CASE("hungarian matches exhaustive search on random matrices") {
  Rng rng(61);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = 1 + rng.Below(6), c = 1 + rng.Below(6);
    Matrix cost = random_matrix(r, c, rng);
    if (trial % 3 == 0)
      for (double& x : cost.data()) x = std::round(x * 2.0);  // ties
    const auto pairs = hungarian(cost);
    REQUIRE(pairs.size() == std::min(r, c));
    std::vector<bool> row(r), col(c);
    double total = 0.0;
    for (const auto& [i, j] : pairs) {
      CHECK(!row[i]);
      CHECK(!col[j]);
      row[i] = col[j] = true;
      total += cost(i, j);
    }
    CHECK(std::abs(total - min_assignment_bruteforce(cost)) <= 1e-9);
  }
}

TEST_CASE("exhaustive small clusterings agree with the permutation oracle") {
  const auto all = all_partial_clusterings(4);
  CHECK(all.size() == 52);
  std::size_t cases = 0;
  for (const Clustering& g : all) {
    for (const Clustering& p : all) {
      for (CeafSimilarity phi : {CeafSimilarity::kMention, CeafSimilarity::kEntity}) {
        const PRF a = ceaf(g, p, phi);
        const PRF b = ceaf_bruteforce(g, p, phi);
        CHECK(a.precision == b.precision);
        CHECK(a.recall == b.recall);
        CHECK(a.f1 == b.f1);
      }
      for (const PRF& m : {muc(g, p), b_cubed(g, p)}) {
        CHECK(in_unit_range(m));
      }
      const PRF m = muc(g, p), mt = muc(p, g);
      CHECK(m.precision == mt.recall);
      CHECK(m.recall == mt.precision);
      const PRF b = b_cubed(g, p), bt = b_cubed(p, g);
      CHECK(b.precision == bt.recall);
      CHECK(b.recall == bt.precision);
      ++cases;
    }
  }
  CHECK(cases == 52 * 52);
}

TEST_CASE("perfect match scores one on random clusterings") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const Clustering g = random_clustering(8, 6, rng, true);
    if (g.empty()) continue;
    for (const PRF& m : {muc(g, g), b_cubed(g, g), ceaf(g, g, CeafSimilarity::kMention),
                         ceaf(g, g, CeafSimilarity::kEntity)})
      check_prf(m, 1, 1, 1);
  }
}

TEST_CASE("merging gold clusters in the prediction keeps scores in range") {
  Rng rng(73);
  for (int trial = 0; trial < 200; ++trial) {
    const Clustering g = random_clustering(8, 4, rng, true);
    if (g.size() < 2) continue;
    Clustering p = g;
    p[0].insert(p[0].end(), p[1].begin(), p[1].end());
    p.erase(p.begin() + 1);
    canonicalize(p);
    const PRF m = muc(g, p);
    CHECK(m.recall == 1.0);
    CHECK(in_unit_range(m));
    CHECK(in_unit_range(b_cubed(g, p)));
    CHECK(in_unit_range(ceaf(g, p, CeafSimilarity::kEntity)));
  }
}

TEST_CASE("corpus scoring is micro-averaged") {
  const std::vector<ScoredDocument> gold{{"a", worked_gold()},
                                         {"b", {{{0, 0}, {1, 1}}}}};
  const std::vector<ScoredDocument> pred{{"a", worked_pred()},
                                         {"b", {{{0, 0}, {1, 1}}}}};
  const MetricReport r = score_documents(gold, pred);
  // MUC: recall (2 + 1) / (3 + 1), precision (2 + 1) / (2 + 1).
  CHECK(std::abs(r.muc.recall - 0.75) <= 1e-15);
  CHECK(r.muc.precision == 1.0);
  CHECK(std::abs(r.conll_f1 - (r.muc.f1 + r.b3.f1 + r.ceaf_e.f1) / 3.0) <= 1e-15);

  // A gold document without a prediction counts as an empty prediction.
  const MetricReport missing = score_documents(gold, {pred[1]});
  CHECK(std::abs(missing.muc.recall - 0.25) <= 1e-15);
  CHECK_THROWS_AS(score_documents(gold, {{"zzz", {}}}), CorpusError);
}

TEST_CASE("report JSON and table") {
  MetricAccumulator acc;
  acc.Add(worked_gold(), worked_pred());
  const MetricReport r = acc.Report();
  const MetricReport back = metric_report_from_json(to_json(r));
  CHECK(back.muc.f1 == r.muc.f1);
  CHECK(back.ceaf_m.precision == r.ceaf_m.precision);
  CHECK(back.conll_f1 == r.conll_f1);
  const std::string table = format_table(r);
  CHECK(table.find("CoNLL F1") != std::string::npos);
  CHECK(table.find("80.00") != std::string::npos);
  CHECK(table.find("63.70") != std::string::npos);
}

TEST_CASE("tied optimal alignments give the same CEAF total") {
  // Two alignments reach 2/3 + 2/3 + 1/2 in different gold orders.
  const Clustering g{{{1, 1}}, {{2, 2}}, {{3, 3}, {4, 4}}, {{6, 6}}};
  const Clustering p{{{0, 0}, {1, 1}}, {{2, 2}, {4, 4}, {6, 6}}, {{3, 3}}};
  for (CeafSimilarity phi : {CeafSimilarity::kMention, CeafSimilarity::kEntity}) {
    const PRF a = ceaf(g, p, phi), b = ceaf_bruteforce(g, p, phi);
    CHECK(a.precision == b.precision);
    CHECK(a.recall == b.recall);
  }
}
