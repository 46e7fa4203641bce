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

#include "rprobe/fusion.h"

#include <algorithm>

#include "rprobe/errors.h"

namespace rprobe {
namespace {

struct AggregationVars {
  std::optional<Var> w;
  std::optional<Var> bias;
  std::vector<Var> projections;
};

FusedVars AggregateVars(Tape& tape, std::span<const Var> slots,
                        Aggregator aggregator, const AggregationVars& vars) {
  if (slots.empty()) throw ShapeError("aggregation needs at least one slot");
  std::vector<Var> h(slots.begin(), slots.end());
  if (!vars.projections.empty()) {
    if (vars.projections.size() != h.size()) {
      throw ShapeError("aggregation: " + std::to_string(h.size()) +
                       " slots but " + std::to_string(vars.projections.size()) +
                       " projections");
    }
    for (std::size_t i = 0; i < h.size(); ++i)
      h[i] = tape.MatMul(h[i], vars.projections[i]);
  } else {
    for (std::size_t i = 1; i < h.size(); ++i) {
      if (!tape.value(h[i]).SameShape(tape.value(h[0]))) {
        throw ShapeError("slot widths differ (" +
                         tape.value(h[0]).ShapeString() + " vs " +
                         tape.value(h[i]).ShapeString() +
                         "); enable project=true to map slots to a common width");
      }
    }
  }

  switch (aggregator) {
    case Aggregator::kMean:
      return {tape.Mean(h), std::nullopt};
    case Aggregator::kSum: {
      Var acc = h[0];
      for (std::size_t i = 1; i < h.size(); ++i) acc = tape.Add(acc, h[i]);
      return {acc, std::nullopt};
    }
    case Aggregator::kAttention: {
      if (!vars.w || !vars.bias) {
        throw ContractError("attention aggregation without score parameters");
      }
      const Matrix& wv = tape.value(*vars.w);
      const Matrix& hv = tape.value(h[0]);
      if (wv.rows() != hv.cols() || wv.cols() != 1) {
        throw ShapeError("attention: score vector " + wv.ShapeString() +
                         " does not fit slot width " +
                         std::to_string(hv.cols()));
      }
      const Matrix& bv = tape.value(*vars.bias);
      if (bv.rows() != 1 || bv.cols() != h.size()) {
        throw ShapeError("attention: bias " + bv.ShapeString() + " for " +
                         std::to_string(h.size()) + " slots");
      }
      std::vector<Var> scores;
      scores.reserve(h.size());
      for (Var hi : h) scores.push_back(tape.MatMul(hi, *vars.w));
      Var logits = tape.AddRowBroadcast(tape.ConcatCols(scores), *vars.bias);
      Var alphas = tape.SoftmaxRows(logits);
      Var acc = tape.MulColBroadcast(h[0], tape.SliceCols(alphas, 0, 1));
      for (std::size_t i = 1; i < h.size(); ++i) {
        acc = tape.Add(acc,
                       tape.MulColBroadcast(h[i], tape.SliceCols(alphas, i, i + 1)));
      }
      return {acc, alphas};
    }
  }
  throw ContractError("unknown aggregator");
}

std::vector<Var> SlotLeaves(Tape& tape, std::span<const Slot> slots) {
  std::vector<Var> out;
  out.reserve(slots.size());
  for (const Slot& s : slots) out.push_back(tape.Leaf(s.tokens));
  return out;
}

std::vector<std::string> Labels(std::span<const Slot> slots) {
  std::vector<std::string> out;
  for (const Slot& s : slots) out.push_back(s.label);
  return out;
}

FusedDocument ValueAggregate(std::span<const Slot> slots, Aggregator agg) {
  Tape tape;
  auto leaves = SlotLeaves(tape, slots);
  FusedVars out = AggregateVars(tape, leaves, agg, {});
  return {tape.value(out.fused), Labels(slots), std::nullopt};
}

std::string SlotLabel(const std::string& source,
                      const std::vector<std::size_t>& layers) {
  std::string label = source + "@" + std::to_string(layers.front());
  if (layers.size() > 1) label += "-" + std::to_string(layers.back());
  return label;
}

}  // namespace

LayerSpec LayerSpec::Uniform(std::span<const std::string> names,
                             LayerSelection selection) {
  LayerSpec spec;
  for (const auto& n : names) spec.sources.emplace_back(n, selection);
  return spec;
}

LayerSpec FusionConfig::ResolveLayers(
    std::span<const std::string> source_names) const {
  LayerSpec spec;
  for (const auto& name : source_names) {
    auto it = layers.find(name);
    spec.sources.emplace_back(name,
                              it == layers.end() ? default_layers : it->second);
  }
  return spec;
}

const char* to_string(Aggregator a) {
  switch (a) {
    case Aggregator::kMean:
      return "mean";
    case Aggregator::kSum:
      return "sum";
    case Aggregator::kAttention:
      return "attention";
  }
  return "?";
}

const char* to_string(WithinSource w) {
  return w == WithinSource::kConcat ? "concat" : "separate";
}

Aggregator aggregator_from_string(const std::string& s) {
  if (s == "mean") return Aggregator::kMean;
  if (s == "sum") return Aggregator::kSum;
  if (s == "attention") return Aggregator::kAttention;
  throw ConfigError("fusion.aggregator must be \"mean\", \"sum\" or "
                    "\"attention\", got \"" + s + "\"");
}

LayerSelection layer_selection_from_json(const Json& j,
                                         const std::string& where) {
  if (j.is_string() && j.get<std::string>() == "final") return {};
  if (j.is_object() && j.size() == 1) {
    const auto it = j.begin();
    const std::string key = it.key();
    const Json& val = it.value();
    const auto n = json_count(val, 1);
    if (!n) throw ConfigError(where + "." + key + " must be a positive integer");
    if (key == "truncate") return {LayerMode::kTruncate, *n};
    if (key == "last_n") return {LayerMode::kLastN, *n};
  }
  throw ConfigError(where +
                    " must be \"final\", {\"truncate\": l} or {\"last_n\": n}");
}

Json to_json(const LayerSelection& selection) {
  switch (selection.mode) {
    case LayerMode::kFinal:
      return "final";
    case LayerMode::kTruncate:
      return Json{{"truncate", selection.value}};
    case LayerMode::kLastN:
      return Json{{"last_n", selection.value}};
  }
  return nullptr;
}

FusionConfig fusion_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("fusion must be an object");
  check_known_keys(j, {"layers", "within_source", "normalize", "aggregator", "project",
                       "common_dim"},
                   "fusion");
  FusionConfig c;
  try {
    if (j.contains("layers")) {
      const Json& jl = j["layers"];
      // A map keyed by source name ("*" for the default), unless it is
      // itself a single selection.
      const bool is_selection =
          jl.is_string() ||
          (jl.is_object() && jl.size() == 1 &&
           (jl.contains("truncate") || jl.contains("last_n")));
      if (is_selection) {
        c.default_layers = layer_selection_from_json(jl, "fusion.layers");
      } else if (jl.is_object()) {
        for (const auto& [name, sel] : jl.items()) {
          auto parsed = layer_selection_from_json(sel, "fusion.layers." + name);
          if (name == "*") {
            c.default_layers = parsed;
          } else {
            c.layers[name] = parsed;
          }
        }
      } else {
        throw ConfigError("fusion.layers must be a selection or an object "
                          "keyed by source name");
      }
    }
    const std::string within = j.value("within_source", "concat");
    if (within == "concat") {
      c.within_source = WithinSource::kConcat;
    } else if (within == "separate") {
      c.within_source = WithinSource::kSeparate;
    } else {
      throw ConfigError("fusion.within_source must be \"concat\" or \"separate\"");
    }
    c.normalize = j.value("normalize", false);
    c.aggregator = aggregator_from_string(j.value("aggregator", "mean"));
    c.project = j.value("project", c.aggregator == Aggregator::kAttention);
    if (j.contains("common_dim")) {
      const auto dim = json_count(j["common_dim"], 1);
      if (!dim) throw ConfigError("fusion.common_dim must be a positive integer");
      c.common_dim = *dim;
    }
  } catch (const Json::type_error& e) {
    throw ConfigError(std::string("fusion: wrong value type: ") + e.what());
  }
  return c;
}

Json to_json(const FusionConfig& c) {
  Json j;
  if (c.layers.empty()) {
    j["layers"] = to_json(c.default_layers);
  } else {
    Json jl = Json::object();
    jl["*"] = to_json(c.default_layers);
    for (const auto& [name, sel] : c.layers) jl[name] = to_json(sel);
    j["layers"] = jl;
  }
  j["within_source"] = to_string(c.within_source);
  j["normalize"] = c.normalize;
  j["project"] = c.project;
  j["aggregator"] = to_string(c.aggregator);
  j["common_dim"] = c.common_dim;
  return j;
}

std::vector<SlotInfo> plan_slots(const EmbeddingBank& bank,
                                 const LayerSpec& layer_spec,
                                 WithinSource within_source) {
  std::vector<std::pair<std::size_t, LayerSelection>> chosen;
  for (const auto& [name, sel] : layer_spec.sources)
    chosen.emplace_back(bank.SourceIndex(name), sel);
  std::sort(chosen.begin(), chosen.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < chosen.size(); ++i) {
    if (chosen[i].first == chosen[i - 1].first) {
      throw ConfigError("source '" + bank.sources()[chosen[i].first].name +
                        "' listed twice");
    }
  }

  std::vector<SlotInfo> slots;
  for (const auto& [src, sel] : chosen) {
    const SourceDescriptor& desc = bank.sources()[src];
    std::vector<std::size_t> layers;
    switch (sel.mode) {
      case LayerMode::kFinal:
        layers = {desc.n_layers};
        break;
      case LayerMode::kTruncate:
        if (sel.value < 1 || sel.value > desc.n_layers) {
          throw LookupError("truncate layer " + std::to_string(sel.value) +
                            " out of range 1.." +
                            std::to_string(desc.n_layers) + " for source '" +
                            desc.name + "'");
        }
        layers = {sel.value};
        break;
      case LayerMode::kLastN:
        if (sel.value < 1 || sel.value > desc.n_layers) {
          throw LookupError("last_n window " + std::to_string(sel.value) +
                            " out of range 1.." +
                            std::to_string(desc.n_layers) + " for source '" +
                            desc.name + "'");
        }
        for (std::size_t l = desc.n_layers - sel.value + 1; l <= desc.n_layers; ++l)
          layers.push_back(l);
        break;
    }
    if (within_source == WithinSource::kConcat || layers.size() == 1) {
      slots.push_back({SlotLabel(desc.name, layers), src, layers,
                       desc.dim * layers.size()});
    } else {
      for (std::size_t l : layers)
        slots.push_back({SlotLabel(desc.name, {l}), src, {l}, desc.dim});
    }
  }
  return slots;
}

std::vector<Slot> build_slots(const EmbeddingBank& bank,
                              const std::string& doc_id,
                              const LayerSpec& layer_spec,
                              WithinSource within_source) {
  const std::size_t doc = bank.DocumentIndex(doc_id);
  const std::size_t n_tokens = bank.documents()[doc].n_tokens;
  std::vector<Slot> out;
  for (const SlotInfo& info : plan_slots(bank, layer_spec, within_source)) {
    const std::size_t dim = bank.sources()[info.source].dim;
    Matrix tokens(n_tokens, info.width);
    for (std::size_t k = 0; k < info.layers.size(); ++k) {
      const Matrix layer = bank.Slice(info.source, info.layers[k], doc);
      for (std::size_t t = 0; t < n_tokens; ++t)
        std::copy(layer.row(t).begin(), layer.row(t).end(),
                  tokens.row(t).begin() + k * dim);
    }
    out.push_back({info.label, std::move(tokens)});
  }
  return out;
}

std::vector<Slot> normalize_slots(std::vector<Slot> slots) {
  for (Slot& s : slots) {
    for (std::size_t t = 0; t < s.tokens.rows(); ++t) {
      auto row = s.tokens.row(t);
      const auto n = l2_normalize(row, 1e-12);
      std::copy(n.begin(), n.end(), row.begin());
    }
  }
  return slots;
}

FusedDocument aggregate_mean(std::span<const Slot> slots) {
  return ValueAggregate(slots, Aggregator::kMean);
}

FusedDocument aggregate_sum(std::span<const Slot> slots) {
  return ValueAggregate(slots, Aggregator::kSum);
}

FusedDocument aggregate_attention(std::span<const Slot> slots,
                                  const AttentionParams& params, Tape& tape) {
  auto leaves = SlotLeaves(tape, slots);
  AggregationVars vars;
  vars.w = tape.Leaf(params.w);
  vars.bias = tape.Leaf(params.bias);
  for (const Matrix& p : params.projections)
    vars.projections.push_back(tape.Leaf(p));
  FusedVars out = AggregateVars(tape, leaves, Aggregator::kAttention, vars);
  return {tape.value(out.fused), Labels(slots), tape.value(*out.alphas)};
}

std::size_t fused_width(std::span<const SlotInfo> slots,
                        const FusionConfig& config) {
  if (slots.empty()) throw ConfigError("fusion needs at least one source");
  if (config.project) {
    if (config.common_dim < 1) throw ConfigError("common_dim must be >= 1");
    return config.common_dim;
  }
  for (const SlotInfo& s : slots) {
    if (s.width != slots[0].width) {
      throw ShapeError("slot widths differ (" + slots[0].label + ": " +
                       std::to_string(slots[0].width) + ", " + s.label + ": " +
                       std::to_string(s.width) +
                       "); enable project=true to map slots to a common width");
    }
  }
  return slots[0].width;
}

FusionParamIds init_fusion_params(ParameterStore& store,
                                  std::span<const SlotInfo> slots,
                                  const FusionConfig& config, Rng& rng) {
  const std::size_t d = fused_width(slots, config);
  FusionParamIds ids;
  if (config.project) {
    for (const SlotInfo& s : slots) {
      ids.projections.push_back(store.Add("fusion.proj." + s.label,
                                          glorot_uniform(s.width, d, rng)));
    }
  }
  if (config.aggregator == Aggregator::kAttention) {
    ids.w = store.Add("fusion.w", Matrix(d, 1));
    ids.bias = store.Add("fusion.bias", Matrix(1, slots.size()));
  }
  return ids;
}

FusedVars aggregate_on_tape(Tape& tape, std::span<const Var> slots,
                            Aggregator aggregator, const FusionParamIds& ids,
                            const BoundParams& params) {
  AggregationVars vars;
  if (ids.w) vars.w = params[*ids.w];
  if (ids.bias) vars.bias = params[*ids.bias];
  for (ParamId p : ids.projections) vars.projections.push_back(params[p]);
  return AggregateVars(tape, slots, aggregator, vars);
}

FusedDocument fuse(const EmbeddingBank& bank, const std::string& doc_id,
                   const LayerSpec& layer_spec, const FusionConfig& config,
                   const ParameterStore& store, const FusionParamIds& ids,
                   Tape& tape) {
  std::vector<Slot> slots =
      build_slots(bank, doc_id, layer_spec, config.within_source);
  if (config.normalize) slots = normalize_slots(std::move(slots));
  BoundParams bound(tape, store);
  auto leaves = SlotLeaves(tape, slots);
  FusedVars out = aggregate_on_tape(tape, leaves, config.aggregator, ids, bound);
  FusedDocument doc{tape.value(out.fused), Labels(slots), std::nullopt};
  if (out.alphas) doc.alphas = tape.value(*out.alphas);
  return doc;
}

}  // namespace rprobe
