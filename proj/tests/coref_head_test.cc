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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "rprobe/coref_head.h"
#include "rprobe/errors.h"
#include "support.h"

using namespace rprobe;
using rprobe::testing::random_matrix;

namespace {

struct Head {
  HeadConfig config;
  ParameterStore store;
  HeadParamIds ids;
};

Head make_head(std::size_t d, HeadConfig config, std::uint64_t seed) {
  Head h;
  h.config = config;
  Rng rng(seed);
  h.ids = init_head_params(h.store, d, config, rng);
  return h;
}

void zero(ParameterStore& store, ParamId id) { store.value(id).Fill(0.0); }

// log(sum(exp(v))) over a plain vector.
double lse(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

TEST_CASE("span enumeration") {
  const auto spans = enumerate_spans(5, 3);
  CHECK(spans.size() == 12);
  CHECK(spans.front() == Span{0, 0});
  CHECK(spans[1] == Span{0, 1});
  CHECK(spans.back() == Span{4, 4});
  CHECK(std::is_sorted(spans.begin(), spans.end()));
  for (const Span& s : spans) CHECK(s.width() <= 3);
  CHECK(enumerate_spans(0, 3).empty());
  CHECK(enumerate_spans(4, 10).size() == 10);
}

TEST_CASE("span representation layout") {
  const std::size_t d = 3;
  HeadConfig config;
  config.max_span_width = 2;
  config.width_dim = 2;
  Head h = make_head(d, config, 5);
  CHECK(span_rep_width(d, config) == 3 * d + 2);
  zero(h.store, h.ids.head_w);
  Tape tape;
  BoundParams params(tape, h.store);
  const Matrix tokens({{1, 2, 3}, {5, 7, 11}, {-1, 0, 4}});
  Var fused = tape.Leaf(tokens);
  const std::vector<Span> spans{{1, 1}, {0, 1}, {0, 2}};
  const Matrix reps =
      tape.value(span_representations(tape, fused, spans, h.ids, params));
  REQUIRE(reps.rows() == 3);
  REQUIRE(reps.cols() == 11);
  const Matrix& table = h.store.value(h.ids.width_table);
  for (std::size_t c = 0; c < d; ++c) {
    // Width 1: start, end and head segments are the token itself.
    CHECK(reps(0, c) == tokens(1, c));
    CHECK(reps(0, d + c) == tokens(1, c));
    CHECK(std::abs(reps(0, 2 * d + c) - tokens(1, c)) <= 1e-12);
    // A zero head scorer averages the span tokens.
    CHECK(std::abs(reps(1, 2 * d + c) - 0.5 * (tokens(0, c) + tokens(1, c))) <= 1e-12);
    CHECK(reps(2, d + c) == tokens(2, c));
  }
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(reps(0, 3 * d + c) == table(0, c));
    CHECK(reps(1, 3 * d + c) == table(1, c));
    CHECK(reps(2, 3 * d + c) == table(1, c));  // wider than the table
  }
}

TEST_CASE("zero mention network scores every span zero") {
  Head h = make_head(4, HeadConfig{}, 6);
  for (ParamId id : {h.ids.mention_w1, h.ids.mention_b1, h.ids.mention_w2,
                     h.ids.mention_b2})
    zero(h.store, id);
  Rng rng(1);
  Tape tape;
  BoundParams params(tape, h.store);
  Var fused = tape.Leaf(random_matrix(6, 4, rng));
  const auto spans = enumerate_spans(6, 3);
  Var reps = span_representations(tape, fused, spans, h.ids, params);
  const Matrix s = tape.value(mention_scores(tape, reps, h.ids, params));
  CHECK(s.rows() == spans.size());
  for (double x : s.data()) CHECK(x == 0.0);
}

TEST_CASE("pruning") {
  const auto spans = enumerate_spans(10, 1);
  std::vector<double> scores{0.1, 0.9, 0.3, 0.8, 0.2, 0.7, 0.0, 0.6, 0.5, 0.4};
  const auto kept = prune_spans(spans, scores, 0.4, 10);
  CHECK(kept == std::vector<std::size_t>{1, 3, 5, 7});
  const auto all = prune_spans(spans, scores, 1.0, 10);
  CHECK(all.size() == 10);
  CHECK(std::is_sorted(all.begin(), all.end()));

  // Ties keep the earliest spans.
  std::vector<double> flat(10, 1.0);
  CHECK(prune_spans(spans, flat, 0.25, 10) == std::vector<std::size_t>{0, 1, 2});
  CHECK(prune_spans(spans, flat, 0.01, 10) == std::vector<std::size_t>{0});
}

TEST_CASE("antecedent score structure") {
  const std::size_t d = 3;
  HeadConfig config;
  config.max_span_width = 1;
  Head h = make_head(d, config, 8);
  for (ParamId id : {h.ids.pair_w1, h.ids.pair_b1, h.ids.pair_w2, h.ids.pair_b2})
    zero(h.store, id);
  Rng rng(2);
  Tape tape;
  BoundParams params(tape, h.store);
  Var fused = tape.Leaf(random_matrix(5, d, rng));
  const auto spans = enumerate_spans(5, 1);
  Var reps = span_representations(tape, fused, spans, h.ids, params);
  Var mention = mention_scores(tape, reps, h.ids, params);
  const AntecedentScores a = antecedent_scores(tape, reps, mention, 2, h.ids, params);
  const Matrix& s = tape.value(a.scores);
  const Matrix& m = tape.value(mention);
  REQUIRE(s.rows() == 5);
  REQUIRE(s.cols() == 3);
  CHECK(a.antecedents[0].empty());
  CHECK(a.antecedents[1] == std::vector<std::size_t>{0});
  CHECK(a.antecedents[4] == std::vector<std::size_t>{3, 2});
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(s(i, 0) == 0.0);
    for (std::size_t c = 1; c < 3; ++c) {
      if (c <= i) {
        CHECK(std::abs(s(i, c) - (m(i, 0) + m(i - c, 0))) <= 1e-12);
      } else {
        CHECK(s(i, c) == kMaskedScore);
      }
    }
  }
}

TEST_CASE("loss matches a direct marginal likelihood") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 3 + rng.Below(6);
    const std::size_t d = 2 + rng.Below(3);
    HeadConfig config;
    config.max_span_width = 2;
    config.hidden_size = 5;
    config.width_dim = 2;
    config.prune_ratio = 0.6;
    config.max_antecedents = 1 + rng.Below(4);
    Head h = make_head(d, config, 100 + trial);
    const Clustering gold = rprobe::testing::random_clustering(n, 2, rng, true);
    Tape tape;
    BoundParams params(tape, h.store);
    Var fused = tape.Leaf(random_matrix(n, d, rng));
    const DocumentForward f = forward_document(tape, fused, config, h.ids, params, &gold);
    REQUIRE(f.loss.has_value());
    const Matrix& s = tape.value(f.antecedents.scores);

    std::map<Span, std::size_t> cluster_of;
    for (std::size_t c = 0; c < gold.size(); ++c)
      for (const Span& sp : gold[c]) cluster_of[sp] = c;
    double expected = 0.0;
    for (std::size_t i = 0; i < f.pruned.size(); ++i) {
      std::vector<double> all{0.0}, good;
      const auto& ante = f.antecedents.antecedents[i];
      for (std::size_t c = 0; c < ante.size(); ++c) {
        all.push_back(s(i, c + 1));
        const auto a = cluster_of.find(f.pruned[i]);
        const auto b = cluster_of.find(f.pruned[ante[c]]);
        if (a != cluster_of.end() && b != cluster_of.end() && a->second == b->second)
          good.push_back(s(i, c + 1));
      }
      if (good.empty()) good.push_back(0.0);
      expected += lse(all) - lse(good);
    }
    const double loss = tape.value(*f.loss)(0, 0);
    CHECK(loss >= 0.0);
    CHECK(std::abs(loss - expected) <= 1e-9 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("a document with no links favours the dummy") {
  // No gold clusters: every span's gold antecedent is the dummy, so pushing
  // all pair scores far below zero drives the loss to zero.
  const std::size_t d = 2;
  HeadConfig config;
  config.max_span_width = 1;
  config.prune_ratio = 1.0;
  Head h = make_head(d, config, 9);
  for (ParamId id : {h.ids.pair_w1, h.ids.pair_w2, h.ids.mention_w1, h.ids.mention_w2,
                     h.ids.mention_b1})
    zero(h.store, id);
  h.store.value(h.ids.mention_b2)(0, 0) = -20.0;
  h.store.value(h.ids.pair_b2)(0, 0) = -20.0;
  Rng rng(3);
  Tape tape;
  BoundParams params(tape, h.store);
  Var fused = tape.Leaf(random_matrix(4, d, rng));
  const Clustering none;
  const DocumentForward f = forward_document(tape, fused, config, h.ids, params, &none);
  CHECK(tape.value(*f.loss)(0, 0) <= 1e-20);
  CHECK(f.predicted.empty());
}

TEST_CASE("decoding examples") {
  const std::vector<Span> pruned{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  const std::vector<std::vector<std::size_t>> ante{{}, {0}, {1, 0}, {2, 1}};
  const double M = kMaskedScore;
  Matrix s({{0, M, M}, {0, 2, M}, {0, -1, -3}, {0, 0.5, 4}});
  const Clustering c = decode_clusters(s, ante, pruned);
  REQUIRE(c.size() == 1);
  CHECK(c[0] == Cluster{{0, 0}, {1, 1}, {3, 3}});
  Matrix none({{0, M, M}, {0, -2, M}, {0, -1, -3}, {0, 0, -4}});
  CHECK(decode_clusters(none, ante, pruned).empty());
  CHECK_THROWS_AS(decode_clusters(Matrix(3, 3), ante, pruned), ShapeError);
}

TEST_CASE("decoded clusters are the components of best-antecedent links") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.Below(9);
    const std::size_t k = 1 + rng.Below(4);
    std::vector<Span> pruned;
    for (std::size_t i = 0; i < m; ++i) pruned.push_back({2 * i, 2 * i});
    std::vector<std::vector<std::size_t>> ante(m);
    Matrix s(m, k + 1, kMaskedScore);
    std::vector<std::vector<std::size_t>> adj(m);
    for (std::size_t i = 0; i < m; ++i) {
      s(i, 0) = 0.0;
      double best = 0.0;
      std::size_t best_j = m;
      for (std::size_t c = 1; c <= k && c <= i; ++c) {
        ante[i].push_back(i - c);
        s(i, c) = rng.Normal();
        if (s(i, c) > best) {
          best = s(i, c);
          best_j = i - c;
        }
      }
      if (best_j < m) {
        adj[i].push_back(best_j);
        adj[best_j].push_back(i);
      }
    }
    std::set<std::set<Span>> expected;
    std::vector<bool> seen(m, false);
    for (std::size_t i = 0; i < m; ++i) {
      if (seen[i]) continue;
      std::set<Span> comp;
      std::vector<std::size_t> stack{i};
      seen[i] = true;
      while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        comp.insert(pruned[u]);
        for (std::size_t v : adj[u])
          if (!seen[v]) {
            seen[v] = true;
            stack.push_back(v);
          }
      }
      if (comp.size() >= 2) expected.insert(comp);
    }
    std::set<std::set<Span>> got;
    for (const Cluster& c : decode_clusters(s, ante, pruned))
      got.insert(std::set<Span>(c.begin(), c.end()));
    CHECK(got == expected);
  }
}

TEST_CASE("head gradients match finite differences") {
  Rng rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 4 + rng.Below(3);
    const std::size_t d = 3;
    HeadConfig config;
    config.max_span_width = 2;
    config.hidden_size = 4;
    config.width_dim = 2;
    config.prune_ratio = 0.7;
    config.max_antecedents = 3;
    Head h = make_head(d, config, 200 + trial);
    const Clustering gold = rprobe::testing::random_clustering(n, 2, rng, true);
    Tape tape;
    BoundParams params(tape, h.store);
    Var fused = tape.Leaf(random_matrix(n, d, rng));
    const DocumentForward f = forward_document(tape, fused, config, h.ids, params, &gold);
    std::vector<Var> leaves{fused};
    for (ParamId id : {h.ids.width_table, h.ids.head_w, h.ids.mention_w1,
                       h.ids.mention_b1, h.ids.mention_w2, h.ids.mention_b2,
                       h.ids.pair_w1, h.ids.pair_b1, h.ids.pair_w2, h.ids.pair_b2})
      leaves.push_back(params[id]);
    const auto check = rprobe::testing::check_gradients(tape, *f.loss, leaves);
    CHECK(check.max_rel_error <= 1e-4);
  }
}
