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

#ifndef RPROBE_SYNTHETIC_H_
#define RPROBE_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rprobe/bank.h"
#include "rprobe/corpus.h"
#include "rprobe/util.h"

namespace rprobe {

// Per-layer signal and noise strengths of one synthetic source. The two
// vectors have one entry per layer.
struct SyntheticSource {
  std::string name;
  std::size_t dim = 16;
  std::vector<double> signal;
  std::vector<double> noise;
};

struct SyntheticSpec {
  std::size_t n_docs = 10;
  std::size_t tokens_per_doc = 40;
  std::size_t n_entities = 4;
  // Fraction of tokens covered by mentions.
  double mention_density = 0.3;
  // Every synthetic mention spans exactly this many tokens.
  std::size_t mention_width = 1;
  std::uint64_t seed = 1;
  std::vector<SyntheticSource> sources;
};

// Throws ConfigError naming the offending field.
void validate(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const Json& j);
Json to_json(const SyntheticSpec& spec);

// Planted-entity bank and its gold corpus.
//
// Each document places mentions on random non-overlapping token blocks and
// assigns them to latent entities, each entity receiving at least two
// mentions. Every (document, source, entity) triple gets a random unit code;
// the vector of token t at layer l is
//   signal[l] * code(entity(t)) + noise[l] * g / sqrt(dim),
// with g a fresh standard normal vector and code = 0 outside mentions. The
// 1/sqrt(dim) factor gives the noise term an expected squared norm of
// noise[l]^2, so strengths are comparable across widths.
std::pair<EmbeddingBank, std::vector<CorefDocument>> gen_synthetic(
    const SyntheticSpec& spec);

}  // namespace rprobe

#endif  // RPROBE_SYNTHETIC_H_
