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

#ifndef RPROBE_BANK_H_
#define RPROBE_BANK_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rprobe/matrix.h"

namespace rprobe {

// One frozen source model, represented only by its exported activations.
struct SourceDescriptor {
  std::string name;
  std::size_t n_layers = 0;
  std::size_t dim = 0;

  friend bool operator==(const SourceDescriptor&,
                         const SourceDescriptor&) = default;
};

struct DocumentEntry {
  std::string doc_id;
  std::size_t n_tokens = 0;

  friend bool operator==(const DocumentEntry&, const DocumentEntry&) = default;
};

// Frozen per-source, per-layer token embeddings.
//
// Each (source, document) payload is a flat float array laid out
// [layer][token][dim]. Layers are addressed 1..n_layers in the public API,
// n_layers being the final output layer. Values are kept as 32-bit floats so
// that a load/write cycle is bitwise lossless; Slice() promotes to double.
class EmbeddingBank {
 public:
  EmbeddingBank() = default;
  // Allocates zero payloads for every (source, document) pair. Throws
  // ValidationError on duplicate names or zero layers/dim.
  EmbeddingBank(std::vector<SourceDescriptor> sources,
                std::vector<DocumentEntry> documents);

  const std::vector<SourceDescriptor>& sources() const { return sources_; }
  const std::vector<DocumentEntry>& documents() const { return documents_; }

  // Throw LookupError for unknown names.
  std::size_t SourceIndex(const std::string& name) const;
  std::size_t DocumentIndex(const std::string& doc_id) const;
  bool HasSource(const std::string& name) const;
  bool HasDocument(const std::string& doc_id) const;

  std::span<float> payload(std::size_t source, std::size_t doc) {
    return payloads_[source * documents_.size() + doc];
  }
  std::span<const float> payload(std::size_t source, std::size_t doc) const {
    return payloads_[source * documents_.size() + doc];
  }

  // Token × dim matrix of `layer` (1-based). Throws LookupError on unknown
  // ids or a layer outside 1..n_layers.
  Matrix Slice(const std::string& source, std::size_t layer,
               const std::string& doc_id) const;
  Matrix Slice(std::size_t source, std::size_t layer, std::size_t doc) const;

  // Throws NonFiniteError naming the first offending payload.
  void CheckFinite() const;

  friend bool operator==(const EmbeddingBank& a, const EmbeddingBank& b);

 private:
  std::vector<SourceDescriptor> sources_;
  std::vector<DocumentEntry> documents_;
  std::vector<std::vector<float>> payloads_;
  std::unordered_map<std::string, std::size_t> source_index_;
  std::unordered_map<std::string, std::size_t> document_index_;
};

// Free-function form of EmbeddingBank::Slice.
Matrix slice(const EmbeddingBank& bank, const std::string& source,
             std::size_t layer, const std::string& doc_id);

// On-disk layout: <dir>/manifest.json plus <dir>/<source>/<doc_id>.emb.
//
// Payload: "RPB1", then little-endian u32 n_layers, n_tokens, dim, then
// n_layers*n_tokens*dim little-endian IEEE-754 binary32 values.
inline constexpr int kBankFormatVersion = 1;
inline constexpr char kPayloadMagic[4] = {'R', 'P', 'B', '1'};
inline constexpr std::size_t kPayloadHeaderBytes = 16;

void write_bank(const EmbeddingBank& bank, const std::filesystem::path& dir);
EmbeddingBank load_bank(const std::filesystem::path& dir);

// Encodes/decodes a single payload file body.
std::vector<unsigned char> encode_payload(std::size_t n_layers,
                                          std::size_t n_tokens,
                                          std::size_t dim,
                                          std::span<const float> values);

}  // namespace rprobe

#endif  // RPROBE_BANK_H_
