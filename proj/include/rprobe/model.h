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

#ifndef RPROBE_MODEL_H_
#define RPROBE_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rprobe/bank.h"
#include "rprobe/coref_head.h"
#include "rprobe/fusion.h"
#include "rprobe/parameters.h"
#include "rprobe/tape.h"
#include "rprobe/util.h"

namespace rprobe {

Json to_json(const HeadConfig& config);
// Missing keys keep their defaults. Throws ConfigError on invalid values.
HeadConfig head_config_from_json(const Json& j);
void validate(const HeadConfig& config);

// Fusion stage plus coreference head over a fixed set of bank sources.
class CorefModel {
 public:
  // Parameters are drawn from streams derived from `seed`; the fusion and
  // head streams are independent, so changing the aggregator leaves the
  // head initialization unchanged.
  static CorefModel Create(const EmbeddingBank& bank,
                           std::vector<std::string> sources,
                           const FusionConfig& fusion, const HeadConfig& head,
                           std::uint64_t seed);

  const std::vector<std::string>& sources() const { return sources_; }
  const FusionConfig& fusion() const { return fusion_; }
  const HeadConfig& head() const { return head_; }
  const std::vector<SlotInfo>& slots() const { return slots_; }
  std::vector<std::string> SlotLabels() const;
  std::size_t fused_dim() const { return fused_dim_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  // Selected, optionally normalized slot matrices of one document. Throws
  // CompatibilityError when the bank's slot layout differs from the
  // model's.
  std::vector<Slot> PrepareSlots(const EmbeddingBank& bank,
                                 const std::string& doc_id) const;

  struct Forward {
    BoundParams params;
    DocumentForward head;
    std::optional<Matrix> alphas;  // n_tokens × k, attention only
  };
  // Records fusion and head on `tape`. `gold` enables the loss.
  Forward Run(Tape& tape, const std::vector<Slot>& slots,
              const Clustering* gold) const;

  // Opaque tag of the experiment configuration that produced the model.
  const std::string& digest() const { return digest_; }
  void set_digest(std::string digest) { digest_ = std::move(digest); }

  Json ToJson() const;
  // Throws ValidationError on malformed input.
  static CorefModel FromJson(const Json& j);

 private:
  CorefModel() = default;
  void Plan(const EmbeddingBank* bank);

  std::vector<std::string> sources_;
  FusionConfig fusion_;
  HeadConfig head_;
  LayerSpec layer_spec_;
  std::vector<SlotInfo> slots_;
  std::size_t fused_dim_ = 0;
  ParameterStore store_;
  FusionParamIds fusion_ids_;
  HeadParamIds head_ids_;
  std::string digest_;
};

}  // namespace rprobe

#endif  // RPROBE_MODEL_H_
