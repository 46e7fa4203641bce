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

#include "rprobe/synthetic.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "rprobe/errors.h"
#include "rprobe/rng.h"

namespace rprobe {
namespace {

std::string DocName(std::size_t i) {
  std::string n = std::to_string(i);
  return "doc" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n;
}

template <typename T>
T Field(const Json& j, const std::string& key, const std::string& path,
        const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("synthetic spec: field '" + path + key +
                      "' has the wrong type");
  }
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.tokens_per_doc > 0 && spec.mention_width < 1) {
    throw ConfigError("synthetic spec: field 'mention_width' must be >= 1");
  }
  if (!(spec.mention_density >= 0.0 && spec.mention_density <= 1.0)) {
    throw ConfigError("synthetic spec: field 'mention_density' must be in [0,1]");
  }
  if (spec.sources.empty()) {
    throw ConfigError("synthetic spec: field 'sources' must not be empty");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < spec.sources.size(); ++i) {
    const auto& s = spec.sources[i];
    const std::string p = "sources[" + std::to_string(i) + "].";
    if (s.name.empty() || !names.insert(s.name).second) {
      throw ConfigError("synthetic spec: field '" + p +
                        "name' must be unique and non-empty");
    }
    if (s.dim < 1) {
      throw ConfigError("synthetic spec: field '" + p + "dim' must be >= 1");
    }
    if (s.signal.empty()) {
      throw ConfigError("synthetic spec: field '" + p +
                        "signal' needs at least one layer");
    }
    if (s.signal.size() != s.noise.size()) {
      throw ConfigError("synthetic spec: fields '" + p + "signal' and '" + p +
                        "noise' must have one entry per layer");
    }
    for (std::size_t l = 0; l < s.signal.size(); ++l) {
      if (!(s.signal[l] >= 0.0) || !std::isfinite(s.signal[l])) {
        throw ConfigError("synthetic spec: field '" + p + "signal[" +
                          std::to_string(l) + "]' must be finite and >= 0");
      }
      if (!(s.noise[l] >= 0.0) || !std::isfinite(s.noise[l])) {
        throw ConfigError("synthetic spec: field '" + p + "noise[" +
                          std::to_string(l) + "]' must be finite and >= 0");
      }
    }
  }
}

SyntheticSpec synthetic_spec_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec: expected an object");
  SyntheticSpec spec;
  spec.n_docs = Field<std::size_t>(j, "n_docs", "", spec.n_docs);
  spec.tokens_per_doc =
      Field<std::size_t>(j, "tokens_per_doc", "", spec.tokens_per_doc);
  spec.n_entities = Field<std::size_t>(j, "n_entities", "", spec.n_entities);
  spec.mention_density =
      Field<double>(j, "mention_density", "", spec.mention_density);
  spec.mention_width =
      Field<std::size_t>(j, "mention_width", "", spec.mention_width);
  spec.seed = Field<std::uint64_t>(j, "seed", "", spec.seed);
  if (!j.contains("sources") || !j["sources"].is_array()) {
    throw ConfigError("synthetic spec: field 'sources' must be an array");
  }
  for (std::size_t i = 0; i < j["sources"].size(); ++i) {
    const Json& js = j["sources"][i];
    const std::string p = "sources[" + std::to_string(i) + "].";
    if (!js.is_object()) {
      throw ConfigError("synthetic spec: field 'sources[" +
                        std::to_string(i) + "]' must be an object");
    }
    SyntheticSource s;
    s.name = Field<std::string>(js, "name", p, "");
    s.dim = Field<std::size_t>(js, "dim", p, s.dim);
    s.signal = Field<std::vector<double>>(js, "signal", p, {});
    s.noise = Field<std::vector<double>>(js, "noise", p, {});
    spec.sources.push_back(std::move(s));
  }
  validate(spec);
  return spec;
}

Json to_json(const SyntheticSpec& spec) {
  Json j;
  j["n_docs"] = spec.n_docs;
  j["tokens_per_doc"] = spec.tokens_per_doc;
  j["n_entities"] = spec.n_entities;
  j["mention_density"] = spec.mention_density;
  j["mention_width"] = spec.mention_width;
  j["seed"] = spec.seed;
  j["sources"] = Json::array();
  for (const auto& s : spec.sources) {
    j["sources"].push_back({{"name", s.name},
                            {"dim", s.dim},
                            {"signal", s.signal},
                            {"noise", s.noise}});
  }
  return j;
}

std::pair<EmbeddingBank, std::vector<CorefDocument>> gen_synthetic(
    const SyntheticSpec& spec) {
  validate(spec);
  std::vector<SourceDescriptor> sources;
  for (const auto& s : spec.sources)
    sources.push_back({s.name, s.signal.size(), s.dim});
  std::vector<DocumentEntry> entries;
  for (std::size_t d = 0; d < spec.n_docs; ++d)
    entries.push_back({DocName(d), spec.tokens_per_doc});
  EmbeddingBank bank(std::move(sources), std::move(entries));

  std::vector<CorefDocument> docs;
  const std::size_t n_tokens = spec.tokens_per_doc;
  for (std::size_t d = 0; d < spec.n_docs; ++d) {
    const std::string doc_id = DocName(d);
    Rng layout_rng = Rng::Derive(spec.seed, "layout/" + doc_id);

    const std::size_t width = std::max<std::size_t>(spec.mention_width, 1);
    const std::size_t n_blocks = n_tokens / width;
    std::size_t n_mentions = static_cast<std::size_t>(std::llround(
        spec.mention_density * static_cast<double>(n_tokens) /
        static_cast<double>(width)));
    n_mentions = std::min(n_mentions, n_blocks);
    const std::size_t n_entities = std::min(spec.n_entities, n_mentions / 2);
    if (n_entities == 0) n_mentions = 0;

    std::vector<std::size_t> blocks(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) blocks[b] = b;
    layout_rng.Shuffle(blocks);
    blocks.resize(n_mentions);
    std::sort(blocks.begin(), blocks.end());

    std::vector<std::size_t> assignment;
    for (std::size_t e = 0; e < n_entities; ++e) {
      assignment.push_back(e);
      assignment.push_back(e);
    }
    while (assignment.size() < n_mentions)
      assignment.push_back(layout_rng.Below(n_entities));
    layout_rng.Shuffle(assignment);

    // entity id per token, -1 outside mentions
    std::vector<long> token_entity(n_tokens, -1);
    CorefDocument doc;
    doc.doc_id = doc_id;
    doc.clusters.assign(n_entities, {});
    for (std::size_t m = 0; m < n_mentions; ++m) {
      const Span span{blocks[m] * width, blocks[m] * width + width - 1};
      for (std::size_t t = span.start; t <= span.end; ++t)
        token_entity[t] = static_cast<long>(assignment[m]);
      doc.clusters[assignment[m]].push_back(span);
    }
    for (std::size_t t = 0; t < n_tokens; ++t)
      doc.tokens.push_back(token_entity[t] < 0
                               ? "w" + std::to_string(t)
                               : "e" + std::to_string(token_entity[t]));
    canonicalize(doc.clusters);
    docs.push_back(std::move(doc));

    for (std::size_t s = 0; s < spec.sources.size(); ++s) {
      const auto& src = spec.sources[s];
      Rng rng = Rng::Derive(spec.seed, "embed/" + doc_id + "/" + src.name);
      std::vector<std::vector<double>> codes(n_entities,
                                             std::vector<double>(src.dim));
      for (auto& code : codes) {
        double norm = 0.0;
        do {
          for (double& x : code) x = rng.Normal();
          norm = norm2(code);
        } while (norm == 0.0);
        for (double& x : code) x /= norm;
      }
      const double noise_scale = 1.0 / std::sqrt(static_cast<double>(src.dim));
      auto out = bank.payload(s, d);
      std::size_t k = 0;
      for (std::size_t l = 0; l < src.signal.size(); ++l) {
        for (std::size_t t = 0; t < n_tokens; ++t) {
          for (std::size_t c = 0; c < src.dim; ++c, ++k) {
            double v = src.noise[l] * noise_scale * rng.Normal();
            if (token_entity[t] >= 0)
              v += src.signal[l] * codes[static_cast<std::size_t>(token_entity[t])][c];
            out[k] = static_cast<float>(v);
          }
        }
      }
    }
  }
  return {std::move(bank), std::move(docs)};
}

}  // namespace rprobe
