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

#include "rprobe/coref_head.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rprobe/errors.h"

namespace rprobe {
namespace {

Var FeedForward(Tape& tape, Var x, Var w1, Var b1, Var w2, Var b2) {
  Var h = tape.Tanh(tape.AddRowBroadcast(tape.MatMul(x, w1), b1));
  return tape.AddRowBroadcast(tape.MatMul(h, w2), b2);
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  std::size_t Find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void Union(std::size_t a, std::size_t b) {
    a = Find(a);
    b = Find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

std::size_t span_rep_width(std::size_t d, const HeadConfig& config) {
  return 3 * d + config.width_dim;
}

HeadParamIds init_head_params(ParameterStore& store, std::size_t d,
                              const HeadConfig& config, Rng& rng) {
  if (config.max_span_width < 1 || config.hidden_size < 1 ||
      config.width_dim < 1) {
    throw ConfigError("head sizes must be positive");
  }
  const std::size_t g = span_rep_width(d, config);
  const std::size_t h = config.hidden_size;
  HeadParamIds ids;
  ids.width_table = store.Add(
      "head.width_table", glorot_uniform(config.max_span_width, config.width_dim, rng));
  ids.head_w = store.Add("head.attention", glorot_uniform(d, 1, rng));
  ids.mention_w1 = store.Add("head.mention.w1", glorot_uniform(g, h, rng));
  ids.mention_b1 = store.Add("head.mention.b1", Matrix(1, h));
  ids.mention_w2 = store.Add("head.mention.w2", glorot_uniform(h, 1, rng));
  ids.mention_b2 = store.Add("head.mention.b2", Matrix(1, 1));
  ids.pair_w1 = store.Add("head.pair.w1", glorot_uniform(3 * g, h, rng));
  ids.pair_b1 = store.Add("head.pair.b1", Matrix(1, h));
  ids.pair_w2 = store.Add("head.pair.w2", glorot_uniform(h, 1, rng));
  ids.pair_b2 = store.Add("head.pair.b2", Matrix(1, 1));
  return ids;
}

std::vector<Span> enumerate_spans(std::size_t n_tokens,
                                  std::size_t max_span_width) {
  std::vector<Span> spans;
  for (std::size_t s = 0; s < n_tokens; ++s)
    for (std::size_t w = 1; w <= max_span_width && s + w <= n_tokens; ++w)
      spans.push_back({s, s + w - 1});
  return spans;
}

Var span_representations(Tape& tape, Var fused, std::span<const Span> spans,
                         const HeadParamIds& ids, const BoundParams& params) {
  const Matrix& x = tape.value(fused);
  const std::size_t n_tokens = x.rows();
  const Matrix& table = tape.value(params[ids.width_table]);
  std::vector<std::size_t> starts, ends, widths;
  for (const Span& s : spans) {
    if (s.start > s.end || s.end >= n_tokens) {
      throw LookupError("span [" + std::to_string(s.start) + "," +
                        std::to_string(s.end) + "] outside document of " +
                        std::to_string(n_tokens) + " tokens");
    }
    starts.push_back(s.start);
    ends.push_back(s.end);
    widths.push_back(std::min(s.width(), table.rows()) - 1);
  }
  if (spans.empty()) {
    return tape.Leaf(Matrix(0, 3 * x.cols() + table.cols()));
  }
  Var x_start = tape.GatherRows(fused, std::move(starts));
  Var x_end = tape.GatherRows(fused, std::move(ends));

  Matrix mask(spans.size(), n_tokens, kMaskedScore);
  for (std::size_t i = 0; i < spans.size(); ++i)
    for (std::size_t t = spans[i].start; t <= spans[i].end; ++t) mask(i, t) = 0.0;
  Var token_scores = tape.Transpose(tape.MatMul(fused, params[ids.head_w]));
  Var weights =
      tape.SoftmaxRows(tape.AddRowBroadcast(tape.Leaf(std::move(mask)), token_scores));
  Var x_head = tape.MatMul(weights, fused);

  Var width_emb = tape.GatherRows(params[ids.width_table], std::move(widths));
  const Var parts[] = {x_start, x_end, x_head, width_emb};
  return tape.ConcatCols(parts);
}

Var mention_scores(Tape& tape, Var reps, const HeadParamIds& ids,
                   const BoundParams& params) {
  return FeedForward(tape, reps, params[ids.mention_w1], params[ids.mention_b1],
                     params[ids.mention_w2], params[ids.mention_b2]);
}

std::vector<std::size_t> prune_spans(std::span<const Span> spans,
                                     std::span<const double> scores,
                                     double ratio, std::size_t n_tokens) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw DomainError("pruning ratio must be in (0, 1]");
  }
  if (scores.size() != spans.size()) {
    throw ShapeError("prune_spans: " + std::to_string(spans.size()) +
                     " spans but " + std::to_string(scores.size()) + " scores");
  }
  // The small slack keeps e.g. 0.4 * 10 from rounding up to 5.
  const auto keep = std::min<std::size_t>(
      spans.size(), static_cast<std::size_t>(std::ceil(
                        ratio * static_cast<double>(n_tokens) - 1e-9)));
  std::vector<std::size_t> order(spans.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return spans[a] < spans[b];
  });
  order.resize(keep);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return spans[a] < spans[b]; });
  return order;
}

AntecedentScores antecedent_scores(Tape& tape, Var reps, Var mention,
                                   std::size_t max_antecedents,
                                   const HeadParamIds& ids,
                                   const BoundParams& params) {
  const std::size_t m = tape.value(reps).rows();
  AntecedentScores out;
  out.antecedents.resize(m);
  if (m == 0) {
    out.scores = tape.Leaf(Matrix(0, 1));
    return out;
  }
  const std::size_t cols = std::min(max_antecedents, m - 1) + 1;
  std::vector<std::size_t> first, second;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 1; c < cols && c <= i; ++c) {
      first.push_back(i);
      second.push_back(i - c);
      out.antecedents[i].push_back(i - c);
    }
  }
  const std::size_t n_pairs = first.size();

  Var zero = tape.Leaf(Matrix(1, 1));
  Var flat = zero;
  if (n_pairs > 0) {
    Var gi = tape.GatherRows(reps, first);
    Var gj = tape.GatherRows(reps, second);
    const Var feats[] = {gi, gj, tape.Mul(gi, gj)};
    Var pair = FeedForward(tape, tape.ConcatCols(feats), params[ids.pair_w1],
                           params[ids.pair_b1], params[ids.pair_w2],
                           params[ids.pair_b2]);
    Var total = tape.Add(tape.Add(tape.GatherRows(mention, first),
                                  tape.GatherRows(mention, second)),
                         pair);
    const Var rows[] = {total, zero};
    flat = tape.ConcatRows(rows);
  }

  std::vector<std::size_t> index(m * cols, n_pairs);
  Matrix mask(m, cols, 0.0);
  std::size_t p = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 1; c < cols; ++c) {
      if (c <= i) {
        index[i * cols + c] = p++;
      } else {
        mask(i, c) = kMaskedScore;
      }
    }
  }
  Var dense = tape.Reshape(tape.GatherRows(flat, std::move(index)), m, cols);
  out.scores = tape.Add(dense, tape.Leaf(std::move(mask)));
  return out;
}

Var coref_loss(Tape& tape, const AntecedentScores& scores,
               std::span<const Span> pruned, const Clustering& gold) {
  const Matrix& s = tape.value(scores.scores);
  if (s.rows() != pruned.size()) {
    throw ShapeError("coref_loss: " + std::to_string(pruned.size()) +
                     " pruned spans but score matrix " + s.ShapeString());
  }
  if (pruned.empty()) return tape.Leaf(Matrix(1, 1));
  std::map<Span, std::size_t> cluster_of;
  for (std::size_t c = 0; c < gold.size(); ++c)
    for (const Span& sp : gold[c]) cluster_of[sp] = c;

  Matrix gold_mask(s.rows(), s.cols(), kMaskedScore);
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    bool any = false;
    auto it = cluster_of.find(pruned[i]);
    if (it != cluster_of.end()) {
      for (std::size_t c = 0; c < scores.antecedents[i].size(); ++c) {
        auto jt = cluster_of.find(pruned[scores.antecedents[i][c]]);
        if (jt != cluster_of.end() && jt->second == it->second) {
          gold_mask(i, c + 1) = 0.0;
          any = true;
        }
      }
    }
    if (!any) gold_mask(i, 0) = 0.0;
  }
  Var all = tape.LogSumExpRows(scores.scores);
  Var gold_only = tape.LogSumExpRows(
      tape.Add(scores.scores, tape.Leaf(std::move(gold_mask))));
  return tape.SumAll(tape.Sub(all, gold_only));
}

Clustering decode_clusters(
    const Matrix& scores,
    const std::vector<std::vector<std::size_t>>& antecedents,
    std::span<const Span> pruned) {
  if (scores.rows() != pruned.size() || antecedents.size() != pruned.size()) {
    throw ShapeError("decode_clusters: inconsistent inputs");
  }
  UnionFind uf(pruned.size());
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    double best = 0.0;  // dummy
    std::size_t best_col = 0;
    for (std::size_t c = 0; c < antecedents[i].size(); ++c) {
      if (scores(i, c + 1) > best) {
        best = scores(i, c + 1);
        best_col = c + 1;
      }
    }
    if (best_col > 0) uf.Union(i, antecedents[i][best_col - 1]);
  }
  std::map<std::size_t, Cluster> groups;
  for (std::size_t i = 0; i < pruned.size(); ++i)
    groups[uf.Find(i)].push_back(pruned[i]);
  Clustering out;
  for (auto& [root, cluster] : groups)
    if (cluster.size() >= 2) out.push_back(std::move(cluster));
  canonicalize(out);
  return out;
}

DocumentForward forward_document(Tape& tape, Var fused,
                                 const HeadConfig& config,
                                 const HeadParamIds& ids,
                                 const BoundParams& params,
                                 const Clustering* gold) {
  const std::size_t n_tokens = tape.value(fused).rows();
  DocumentForward out;
  const auto spans = enumerate_spans(n_tokens, config.max_span_width);
  if (spans.empty()) {
    out.antecedents.scores = tape.Leaf(Matrix(0, 1));
    if (gold) out.loss = tape.Leaf(Matrix(1, 1));
    return out;
  }
  Var reps = span_representations(tape, fused, spans, ids, params);
  Var scores = mention_scores(tape, reps, ids, params);
  const auto kept = prune_spans(spans, tape.value(scores).data(),
                                config.prune_ratio, n_tokens);
  for (std::size_t k : kept) out.pruned.push_back(spans[k]);
  Var kept_reps = tape.GatherRows(reps, kept);
  Var kept_scores = tape.GatherRows(scores, kept);
  out.antecedents = antecedent_scores(tape, kept_reps, kept_scores,
                                      config.max_antecedents, ids, params);
  if (gold) out.loss = coref_loss(tape, out.antecedents, out.pruned, *gold);
  out.predicted = decode_clusters(tape.value(out.antecedents.scores),
                                  out.antecedents.antecedents, out.pruned);
  return out;
}

}  // namespace rprobe
