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

#include "rprobe/model.h"

#include <utility>

#include "rprobe/errors.h"
#include "rprobe/rng.h"

namespace rprobe {
namespace {

constexpr int kModelFormatVersion = 1;

std::size_t PositiveField(const Json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  const auto n = json_count(v, 1);
  if (!n) throw ConfigError(std::string(key) + " must be a positive integer");
  return *n;
}

Json SlotToJson(const SlotInfo& s, const std::string& source) {
  return {{"label", s.label},
          {"source", source},
          {"layers", s.layers},
          {"width", s.width}};
}

bool SameLayout(const SlotInfo& a, const SlotInfo& b) {
  return a.label == b.label && a.layers == b.layers && a.width == b.width;
}

}  // namespace

Json to_json(const HeadConfig& c) {
  return {{"max_span_width", c.max_span_width},
          {"hidden_size", c.hidden_size},
          {"width_dim", c.width_dim},
          {"prune_ratio", c.prune_ratio},
          {"max_antecedents", c.max_antecedents}};
}

HeadConfig head_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("head config must be an object");
  HeadConfig c;
  c.max_span_width = PositiveField(j, "max_span_width", c.max_span_width);
  c.hidden_size = PositiveField(j, "hidden_size", c.hidden_size);
  c.width_dim = PositiveField(j, "width_dim", c.width_dim);
  c.max_antecedents = PositiveField(j, "max_antecedents", c.max_antecedents);
  if (j.contains("prune_ratio")) {
    if (!j["prune_ratio"].is_number()) {
      throw ConfigError("prune_ratio must be a number");
    }
    c.prune_ratio = j["prune_ratio"].get<double>();
  }
  validate(c);
  return c;
}

void validate(const HeadConfig& c) {
  if (c.max_span_width < 1) throw ConfigError("max_span_width must be >= 1");
  if (c.hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (c.width_dim < 1) throw ConfigError("width_dim must be >= 1");
  if (c.max_antecedents < 1) throw ConfigError("max_antecedents must be >= 1");
  if (!(c.prune_ratio > 0.0 && c.prune_ratio <= 1.0)) {
    throw ConfigError("prune_ratio must lie in (0, 1]");
  }
}

CorefModel CorefModel::Create(const EmbeddingBank& bank,
                              std::vector<std::string> sources,
                              const FusionConfig& fusion,
                              const HeadConfig& head, std::uint64_t seed) {
  validate(head);
  CorefModel m;
  m.sources_ = std::move(sources);
  m.fusion_ = fusion;
  m.head_ = head;
  m.Plan(&bank);
  Rng fusion_rng = Rng::Derive(seed, "init/fusion");
  Rng head_rng = Rng::Derive(seed, "init/head");
  m.fusion_ids_ = init_fusion_params(m.store_, m.slots_, fusion, fusion_rng);
  m.head_ids_ = init_head_params(m.store_, m.fused_dim_, head, head_rng);
  return m;
}

void CorefModel::Plan(const EmbeddingBank* bank) {
  if (sources_.empty()) throw ConfigError("at least one source is required");
  layer_spec_ = fusion_.ResolveLayers(sources_);
  if (bank) slots_ = plan_slots(*bank, layer_spec_, fusion_.within_source);
  fused_dim_ = fused_width(slots_, fusion_);
}

std::vector<std::string> CorefModel::SlotLabels() const {
  std::vector<std::string> out;
  for (const SlotInfo& s : slots_) out.push_back(s.label);
  return out;
}

std::vector<Slot> CorefModel::PrepareSlots(const EmbeddingBank& bank,
                                           const std::string& doc_id) const {
  std::vector<SlotInfo> plan;
  try {
    plan = plan_slots(bank, layer_spec_, fusion_.within_source);
  } catch (const LookupError& e) {
    throw CompatibilityError(std::string("bank does not fit the model: ") +
                             e.what());
  }
  bool same = plan.size() == slots_.size();
  for (std::size_t i = 0; same && i < plan.size(); ++i)
    same = SameLayout(plan[i], slots_[i]);
  if (!same) {
    throw CompatibilityError("bank slot layout differs from the model's");
  }
  std::vector<Slot> slots =
      build_slots(bank, doc_id, layer_spec_, fusion_.within_source);
  if (fusion_.normalize) slots = normalize_slots(std::move(slots));
  return slots;
}

CorefModel::Forward CorefModel::Run(Tape& tape, const std::vector<Slot>& slots,
                                    const Clustering* gold) const {
  BoundParams params(tape, store_);
  std::vector<Var> leaves;
  leaves.reserve(slots.size());
  for (const Slot& s : slots) leaves.push_back(tape.Leaf(s.tokens));
  FusedVars fused = aggregate_on_tape(tape, leaves, fusion_.aggregator,
                                      fusion_ids_, params);
  DocumentForward head =
      forward_document(tape, fused.fused, head_, head_ids_, params, gold);
  std::optional<Matrix> alphas;
  if (fused.alphas) alphas = tape.value(*fused.alphas);
  return {params, std::move(head), std::move(alphas)};
}

Json CorefModel::ToJson() const {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["digest"] = digest_;
  j["sources"] = sources_;
  j["fusion"] = to_json(fusion_);
  j["head"] = to_json(head_);
  Json slots = Json::array();
  for (const SlotInfo& s : slots_)
    slots.push_back(SlotToJson(s, s.label.substr(0, s.label.find('@'))));
  j["slots"] = slots;
  j["fused_dim"] = fused_dim_;
  Json params = Json::array();
  for (std::size_t p = 0; p < store_.size(); ++p) {
    const Matrix& m = store_.value(p);
    params.push_back({{"name", store_.name(p)},
                      {"rows", m.rows()},
                      {"cols", m.cols()},
                      {"data", std::vector<double>(m.data().begin(), m.data().end())}});
  }
  j["parameters"] = params;
  return j;
}

CorefModel CorefModel::FromJson(const Json& j) {
  CorefModel m;
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw VersionError("unsupported model format_version " +
                         j.at("format_version").dump());
    }
    m.digest_ = j.at("digest").get<std::string>();
    m.sources_ = j.at("sources").get<std::vector<std::string>>();
    m.fusion_ = fusion_config_from_json(j.at("fusion"));
    m.head_ = head_config_from_json(j.at("head"));
    for (const Json& s : j.at("slots")) {
      SlotInfo info;
      info.label = s.at("label").get<std::string>();
      info.layers = s.at("layers").get<std::vector<std::size_t>>();
      info.width = s.at("width").get<std::size_t>();
      // Bank index; unknown until PrepareSlots sees a bank.
      info.source = 0;
      m.slots_.push_back(std::move(info));
    }
    m.Plan(nullptr);
    if (m.fused_dim_ != j.at("fused_dim").get<std::size_t>()) {
      throw ValidationError("model fused_dim disagrees with its slots");
    }
    for (const Json& p : j.at("parameters")) {
      const auto rows = p.at("rows").get<std::size_t>();
      const auto cols = p.at("cols").get<std::size_t>();
      auto data = p.at("data").get<std::vector<double>>();
      if (data.size() != rows * cols) {
        throw ValidationError("parameter " + p.at("name").get<std::string>() +
                              " has the wrong element count");
      }
      m.store_.Add(p.at("name").get<std::string>(),
                   Matrix(rows, cols, std::move(data)));
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }

  // Rebuild handles from names and check every shape against a freshly
  // initialized model of the same configuration.
  ParameterStore reference;
  Rng rng(0);
  FusionParamIds ref_fusion =
      init_fusion_params(reference, m.slots_, m.fusion_, rng);
  HeadParamIds ref_head = init_head_params(reference, m.fused_dim_, m.head_, rng);
  if (reference.size() != m.store_.size()) {
    throw ValidationError("model file has " + std::to_string(m.store_.size()) +
                          " parameters, expected " +
                          std::to_string(reference.size()));
  }
  for (std::size_t p = 0; p < reference.size(); ++p) {
    ParamId id;
    try {
      id = m.store_.Find(reference.name(p));
    } catch (const LookupError&) {
      throw ValidationError("model file lacks parameter " + reference.name(p));
    }
    if (!m.store_.value(id).SameShape(reference.value(p))) {
      throw ValidationError("parameter " + reference.name(p) + " has shape " +
                            m.store_.value(id).ShapeString() + ", expected " +
                            reference.value(p).ShapeString());
    }
    if (!m.store_.value(id).AllFinite()) {
      throw NonFiniteError("parameter " + reference.name(p) +
                           " holds non-finite values");
    }
  }
  auto remap = [&](ParamId ref_id) { return m.store_.Find(reference.name(ref_id)); };
  if (ref_fusion.w) m.fusion_ids_.w = remap(*ref_fusion.w);
  if (ref_fusion.bias) m.fusion_ids_.bias = remap(*ref_fusion.bias);
  for (ParamId p : ref_fusion.projections) m.fusion_ids_.projections.push_back(remap(p));
  m.head_ids_ = {remap(ref_head.width_table), remap(ref_head.head_w),
                 remap(ref_head.mention_w1),  remap(ref_head.mention_b1),
                 remap(ref_head.mention_w2),  remap(ref_head.mention_b2),
                 remap(ref_head.pair_w1),     remap(ref_head.pair_b1),
                 remap(ref_head.pair_w2),     remap(ref_head.pair_b2)};
  return m;
}

}  // namespace rprobe
