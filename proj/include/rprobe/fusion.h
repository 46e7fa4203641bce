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

// Embedding fusion: layer selection, per-slot normalization and projection,
// and mean / sum / attention aggregation of source embeddings into one
// token representation.
//
// A "slot" is one token-vector stream entering aggregation: a source at a
// single layer, or a source's concatenated layer window. With attention,
// each token t receives
//
//   h_i   = slot_i[t] · P_i          (identity when projection is off)
//   alpha = softmax_i(h_i · w + b_i)
//   fused = sum_i alpha_i h_i
//
// where w is shared across slots. With w = 0 and b = 0 the weights are
// uniform and the output equals the mean aggregator.

#ifndef RPROBE_FUSION_H_
#define RPROBE_FUSION_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rprobe/bank.h"
#include "rprobe/matrix.h"
#include "rprobe/parameters.h"
#include "rprobe/rng.h"
#include "rprobe/tape.h"
#include "rprobe/util.h"

namespace rprobe {

enum class LayerMode { kFinal, kTruncate, kLastN };

struct LayerSelection {
  LayerMode mode = LayerMode::kFinal;
  // Layer for kTruncate (1-based), window size for kLastN.
  std::size_t value = 0;

  friend bool operator==(const LayerSelection&, const LayerSelection&) = default;
};

// Ordered (source, selection) pairs. Slots follow bank manifest order
// regardless of the order here.
struct LayerSpec {
  std::vector<std::pair<std::string, LayerSelection>> sources;

  static LayerSpec Uniform(std::span<const std::string> names,
                           LayerSelection selection);
};

enum class WithinSource { kConcat, kSeparate };
enum class Aggregator { kMean, kSum, kAttention };

struct FusionConfig {
  // Per-source overrides; sources without one use default_layers.
  LayerSelection default_layers;
  std::map<std::string, LayerSelection> layers;
  WithinSource within_source = WithinSource::kConcat;
  bool normalize = false;
  bool project = false;
  Aggregator aggregator = Aggregator::kMean;
  // Width of projected slots; ignored when project is false.
  std::size_t common_dim = 32;

  LayerSpec ResolveLayers(std::span<const std::string> source_names) const;
};

const char* to_string(Aggregator a);
const char* to_string(WithinSource w);
Aggregator aggregator_from_string(const std::string& s);

// Parses the `fusion` object of an experiment config. `project` defaults to
// true for attention and false otherwise.
FusionConfig fusion_config_from_json(const Json& j);
Json to_json(const FusionConfig& config);
Json to_json(const LayerSelection& selection);
LayerSelection layer_selection_from_json(const Json& j,
                                         const std::string& where);

// Static description of one slot.
struct SlotInfo {
  std::string label;
  std::size_t source = 0;
  // Ascending, 1-based.
  std::vector<std::size_t> layers;
  std::size_t width = 0;
};

// Throws LookupError for unknown sources or out-of-range layers.
std::vector<SlotInfo> plan_slots(const EmbeddingBank& bank,
                                 const LayerSpec& layer_spec,
                                 WithinSource within_source);

struct Slot {
  std::string label;
  Matrix tokens;  // n_tokens × width
};

std::vector<Slot> build_slots(const EmbeddingBank& bank,
                              const std::string& doc_id,
                              const LayerSpec& layer_spec,
                              WithinSource within_source);

// Row-wise L2 normalization with eps 1e-12. Idempotent.
std::vector<Slot> normalize_slots(std::vector<Slot> slots);

// Value-level aggregation parameters.
struct AttentionParams {
  Matrix w;                         // d × 1
  Matrix bias;                      // 1 × k
  std::vector<Matrix> projections;  // d_i × d each, or empty
};

struct FusedDocument {
  Matrix fused;  // n_tokens × d
  std::vector<std::string> slot_labels;
  std::optional<Matrix> alphas;  // n_tokens × k, attention only
};

FusedDocument aggregate_mean(std::span<const Slot> slots);
FusedDocument aggregate_sum(std::span<const Slot> slots);
// Records the computation on `tape` with the parameters as leaves.
FusedDocument aggregate_attention(std::span<const Slot> slots,
                                  const AttentionParams& params, Tape& tape);

// Parameter handles of a fusion stage inside a ParameterStore.
struct FusionParamIds {
  std::optional<ParamId> w;
  std::optional<ParamId> bias;
  std::vector<ParamId> projections;
};

// Effective fused width: common_dim with projection, otherwise the shared
// slot width. Throws ShapeError when widths differ without projection, or
// ConfigError when common_dim is 0.
std::size_t fused_width(std::span<const SlotInfo> slots,
                        const FusionConfig& config);

// Registers fusion parameters: Glorot-initialized projections when
// config.project, plus zero-initialized w and bias for attention.
FusionParamIds init_fusion_params(ParameterStore& store,
                                  std::span<const SlotInfo> slots,
                                  const FusionConfig& config, Rng& rng);

struct FusedVars {
  Var fused;
  std::optional<Var> alphas;
};

// Aggregates slot nodes already on `tape`.
FusedVars aggregate_on_tape(Tape& tape, std::span<const Var> slots,
                            Aggregator aggregator, const FusionParamIds& ids,
                            const BoundParams& params);

// build_slots → optional normalize → aggregate (with optional projection).
FusedDocument fuse(const EmbeddingBank& bank, const std::string& doc_id,
                   const LayerSpec& layer_spec, const FusionConfig& config,
                   const ParameterStore& store, const FusionParamIds& ids,
                   Tape& tape);

}  // namespace rprobe

#endif  // RPROBE_FUSION_H_
