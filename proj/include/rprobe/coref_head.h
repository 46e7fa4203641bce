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

// First-order span-ranking coreference head over fused token vectors.
//
// Pipeline for one document: enumerate spans up to a maximum width, embed
// each span as [x_start; x_end; x_head; width_emb] where x_head is a
// softmax-weighted sum of the span's tokens, score mentions with a
// two-layer network, keep the top ceil(ratio * n_tokens) spans, then score
// every kept span against up to K preceding kept spans:
//
//   s(i, j) = s_m(i) + s_m(j) + s_a([g_i; g_j; g_i * g_j]),   s(i, eps) = 0
//
// Training maximizes the marginal likelihood of gold antecedents under a
// per-span softmax; decoding links each span to its best antecedent when
// that beats the dummy.

#ifndef RPROBE_COREF_HEAD_H_
#define RPROBE_COREF_HEAD_H_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rprobe/corpus.h"
#include "rprobe/matrix.h"
#include "rprobe/parameters.h"
#include "rprobe/rng.h"
#include "rprobe/tape.h"

namespace rprobe {

struct HeadConfig {
  std::size_t max_span_width = 10;
  std::size_t hidden_size = 64;
  std::size_t width_dim = 8;
  double prune_ratio = 0.4;
  std::size_t max_antecedents = 50;
};

struct HeadParamIds {
  ParamId width_table = 0;  // max_span_width × width_dim
  ParamId head_w = 0;       // d × 1
  ParamId mention_w1 = 0;   // g × hidden
  ParamId mention_b1 = 0;   // 1 × hidden
  ParamId mention_w2 = 0;   // hidden × 1
  ParamId mention_b2 = 0;   // 1 × 1
  ParamId pair_w1 = 0;      // 3g × hidden
  ParamId pair_b1 = 0;
  ParamId pair_w2 = 0;
  ParamId pair_b2 = 0;
};

// Span representation width for fused width d.
std::size_t span_rep_width(std::size_t d, const HeadConfig& config);

HeadParamIds init_head_params(ParameterStore& store, std::size_t d,
                              const HeadConfig& config, Rng& rng);

// All spans of width <= max_span_width ordered by (start, end).
std::vector<Span> enumerate_spans(std::size_t n_tokens,
                                  std::size_t max_span_width);

// [S × (3d + width_dim)] span embeddings. Spans wider than the width table
// use its last row.
Var span_representations(Tape& tape, Var fused, std::span<const Span> spans,
                         const HeadParamIds& ids, const BoundParams& params);

// [S × 1] mention scores.
Var mention_scores(Tape& tape, Var reps, const HeadParamIds& ids,
                   const BoundParams& params);

// Indices (into `spans`) of the top ceil(ratio * n_tokens) spans by score,
// ties broken by (start, end), returned in (start, end) order.
std::vector<std::size_t> prune_spans(std::span<const Span> spans,
                                     std::span<const double> scores,
                                     double ratio, std::size_t n_tokens);

struct AntecedentScores {
  // [M × C]: column 0 is the dummy antecedent (fixed 0); column c >= 1 holds
  // s(i, i - c) when i - c >= 0 and c <= K, and a large negative mask
  // otherwise.
  Var scores;
  // antecedents[i][c - 1] = i - c for the valid columns.
  std::vector<std::vector<std::size_t>> antecedents;
};

// `reps` and `mention` are restricted to pruned spans in (start, end) order.
AntecedentScores antecedent_scores(Tape& tape, Var reps, Var mention,
                                   std::size_t max_antecedents,
                                   const HeadParamIds& ids,
                                   const BoundParams& params);

// Negative marginal log-likelihood summed over pruned spans (1×1 node).
Var coref_loss(Tape& tape, const AntecedentScores& scores,
               std::span<const Span> pruned, const Clustering& gold);

// Greedy best-antecedent linking with union-find; singletons dropped.
Clustering decode_clusters(const Matrix& scores,
                           const std::vector<std::vector<std::size_t>>& antecedents,
                           std::span<const Span> pruned);

// Whole-document forward pass.
struct DocumentForward {
  std::vector<Span> pruned;
  AntecedentScores antecedents;
  std::optional<Var> loss;  // set when gold clusters were supplied
  Clustering predicted;
};

DocumentForward forward_document(Tape& tape, Var fused,
                                 const HeadConfig& config,
                                 const HeadParamIds& ids,
                                 const BoundParams& params,
                                 const Clustering* gold);

inline constexpr double kMaskedScore = -1e30;

}  // namespace rprobe

#endif  // RPROBE_COREF_HEAD_H_
