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

#include "rprobe/bank.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "rprobe/errors.h"
#include "rprobe/util.h"

namespace rprobe {

namespace fs = std::filesystem;

EmbeddingBank::EmbeddingBank(std::vector<SourceDescriptor> sources,
                             std::vector<DocumentEntry> documents)
    : sources_(std::move(sources)), documents_(std::move(documents)) {
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    const auto& s = sources_[i];
    check_path_component(s.name, "source name");
    if (s.n_layers < 1 || s.dim < 1) {
      throw ValidationError("source '" + s.name +
                            "' needs n_layers >= 1 and dim >= 1");
    }
    if (!source_index_.emplace(s.name, i).second) {
      throw ValidationError("duplicate source name '" + s.name + "'");
    }
  }
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    check_path_component(documents_[i].doc_id, "doc_id");
    if (!document_index_.emplace(documents_[i].doc_id, i).second) {
      throw ValidationError("duplicate doc_id '" + documents_[i].doc_id + "'");
    }
  }
  payloads_.resize(sources_.size() * documents_.size());
  for (std::size_t s = 0; s < sources_.size(); ++s) {
    for (std::size_t d = 0; d < documents_.size(); ++d) {
      payloads_[s * documents_.size() + d].assign(
          sources_[s].n_layers * documents_[d].n_tokens * sources_[s].dim,
          0.0f);
    }
  }
}

std::size_t EmbeddingBank::SourceIndex(const std::string& name) const {
  auto it = source_index_.find(name);
  if (it == source_index_.end()) {
    throw LookupError("unknown source '" + name + "'");
  }
  return it->second;
}

std::size_t EmbeddingBank::DocumentIndex(const std::string& doc_id) const {
  auto it = document_index_.find(doc_id);
  if (it == document_index_.end()) {
    throw LookupError("unknown doc_id '" + doc_id + "'");
  }
  return it->second;
}

bool EmbeddingBank::HasSource(const std::string& name) const {
  return source_index_.contains(name);
}

bool EmbeddingBank::HasDocument(const std::string& doc_id) const {
  return document_index_.contains(doc_id);
}

Matrix EmbeddingBank::Slice(const std::string& source, std::size_t layer,
                            const std::string& doc_id) const {
  return Slice(SourceIndex(source), layer, DocumentIndex(doc_id));
}

Matrix EmbeddingBank::Slice(std::size_t source, std::size_t layer,
                            std::size_t doc) const {
  if (source >= sources_.size()) {
    throw LookupError("source index " + std::to_string(source) +
                      " out of range");
  }
  if (doc >= documents_.size()) {
    throw LookupError("document index " + std::to_string(doc) +
                      " out of range");
  }
  const auto& s = sources_[source];
  if (layer < 1 || layer > s.n_layers) {
    throw LookupError("layer " + std::to_string(layer) + " out of range 1.." +
                      std::to_string(s.n_layers) + " for source '" + s.name +
                      "'");
  }
  const std::size_t n_tokens = documents_[doc].n_tokens;
  const auto values = payload(source, doc);
  const std::size_t offset = (layer - 1) * n_tokens * s.dim;
  Matrix out(n_tokens, s.dim);
  for (std::size_t i = 0; i < n_tokens * s.dim; ++i)
    out.data()[i] = static_cast<double>(values[offset + i]);
  return out;
}

void EmbeddingBank::CheckFinite() const {
  for (std::size_t s = 0; s < sources_.size(); ++s) {
    for (std::size_t d = 0; d < documents_.size(); ++d) {
      for (float x : payload(s, d)) {
        if (!std::isfinite(x)) {
          throw NonFiniteError("non-finite value in source '" +
                               sources_[s].name + "', document '" +
                               documents_[d].doc_id + "'");
        }
      }
    }
  }
}

bool operator==(const EmbeddingBank& a, const EmbeddingBank& b) {
  if (a.sources_ != b.sources_ || a.documents_ != b.documents_) return false;
  for (std::size_t i = 0; i < a.payloads_.size(); ++i) {
    const auto& pa = a.payloads_[i];
    const auto& pb = b.payloads_[i];
    if (pa.size() != pb.size()) return false;
    // Bitwise, so NaN payloads and signed zeros compare faithfully.
    if (!pa.empty() &&
        std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

Matrix slice(const EmbeddingBank& bank, const std::string& source,
             std::size_t layer, const std::string& doc_id) {
  return bank.Slice(source, layer, doc_id);
}

namespace {

void PutU32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t GetU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t CheckedU32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) {
    throw ValidationError(std::string(what) + " exceeds the u32 payload range");
  }
  return static_cast<std::uint32_t>(v);
}

fs::path PayloadPath(const fs::path& dir, const std::string& source,
                     const std::string& doc_id) {
  return dir / source / (doc_id + ".emb");
}

std::size_t ManifestCount(const Json& j, const char* key,
                          const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    throw ValidationError("manifest: " + where + " needs a non-negative "
                          "integer '" + key + "'");
  }
  return j[key].get<std::size_t>();
}

std::string ManifestString(const Json& j, const char* key,
                           const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ValidationError("manifest: " + where + " needs a string '" + key +
                          "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

std::vector<unsigned char> encode_payload(std::size_t n_layers,
                                          std::size_t n_tokens,
                                          std::size_t dim,
                                          std::span<const float> values) {
  if (values.size() != n_layers * n_tokens * dim) {
    throw ShapeError("payload has " + std::to_string(values.size()) +
                     " values, header implies " +
                     std::to_string(n_layers * n_tokens * dim));
  }
  std::vector<unsigned char> out;
  out.reserve(kPayloadHeaderBytes + 4 * values.size());
  out.insert(out.end(), kPayloadMagic, kPayloadMagic + 4);
  PutU32(out, CheckedU32(n_layers, "n_layers"));
  PutU32(out, CheckedU32(n_tokens, "n_tokens"));
  PutU32(out, CheckedU32(dim, "dim"));
  for (float f : values) PutU32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

void write_bank(const EmbeddingBank& bank, const fs::path& dir) {
  bank.CheckFinite();
  Json manifest;
  manifest["format_version"] = kBankFormatVersion;
  manifest["dtype"] = "f32";
  manifest["endianness"] = "little";
  manifest["sources"] = Json::array();
  for (const auto& s : bank.sources()) {
    manifest["sources"].push_back(
        {{"name", s.name}, {"n_layers", s.n_layers}, {"dim", s.dim}});
  }
  manifest["documents"] = Json::array();
  for (const auto& d : bank.documents()) {
    manifest["documents"].push_back(
        {{"doc_id", d.doc_id}, {"n_tokens", d.n_tokens}});
  }
  for (std::size_t s = 0; s < bank.sources().size(); ++s) {
    const auto& src = bank.sources()[s];
    for (std::size_t d = 0; d < bank.documents().size(); ++d) {
      const auto& doc = bank.documents()[d];
      const auto bytes =
          encode_payload(src.n_layers, doc.n_tokens, src.dim, bank.payload(s, d));
      write_file_atomic(
          PayloadPath(dir, src.name, doc.doc_id),
          std::string_view(reinterpret_cast<const char*>(bytes.data()),
                           bytes.size()));
    }
  }
  write_json_file(dir / "manifest.json", manifest);
}

EmbeddingBank load_bank(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const Json manifest = read_json_file(manifest_path);
  if (!manifest.is_object()) {
    throw ValidationError(manifest_path.string() + ": expected an object");
  }
  if (!manifest.contains("format_version") ||
      !manifest["format_version"].is_number_integer() ||
      manifest["format_version"].get<int>() != kBankFormatVersion) {
    throw VersionError(manifest_path.string() +
                       ": unsupported format_version (expected " +
                       std::to_string(kBankFormatVersion) + ")");
  }
  if (manifest.value("dtype", "") != "f32") {
    throw VersionError(manifest_path.string() + ": dtype must be \"f32\"");
  }
  if (manifest.value("endianness", "") != "little") {
    throw VersionError(manifest_path.string() +
                       ": endianness must be \"little\"");
  }
  if (!manifest.contains("sources") || !manifest["sources"].is_array() ||
      !manifest.contains("documents") || !manifest["documents"].is_array()) {
    throw ValidationError(manifest_path.string() +
                          ": 'sources' and 'documents' must be arrays");
  }
  std::vector<SourceDescriptor> sources;
  for (const auto& js : manifest["sources"]) {
    SourceDescriptor s;
    s.name = ManifestString(js, "name", "source");
    s.n_layers = ManifestCount(js, "n_layers", "source '" + s.name + "'");
    s.dim = ManifestCount(js, "dim", "source '" + s.name + "'");
    sources.push_back(std::move(s));
  }
  std::vector<DocumentEntry> documents;
  for (const auto& jd : manifest["documents"]) {
    DocumentEntry d;
    d.doc_id = ManifestString(jd, "doc_id", "document");
    d.n_tokens = ManifestCount(jd, "n_tokens", "document '" + d.doc_id + "'");
    documents.push_back(std::move(d));
  }

  EmbeddingBank bank(std::move(sources), std::move(documents));
  for (std::size_t s = 0; s < bank.sources().size(); ++s) {
    const auto& src = bank.sources()[s];
    for (std::size_t d = 0; d < bank.documents().size(); ++d) {
      const auto& doc = bank.documents()[d];
      const fs::path path = PayloadPath(dir, src.name, doc.doc_id);
      const auto bytes = read_binary_file(path);
      if (bytes.size() < 4 ||
          std::memcmp(bytes.data(), kPayloadMagic, 4) != 0) {
        throw BadMagicError(path.string() + ": bad magic (expected RPB1)");
      }
      if (bytes.size() < kPayloadHeaderBytes) {
        throw PayloadLengthError(path.string() + ": expected at least " +
                                 std::to_string(kPayloadHeaderBytes) +
                                 " header bytes, got " +
                                 std::to_string(bytes.size()));
      }
      const std::uint32_t h_layers = GetU32(bytes.data() + 4);
      const std::uint32_t h_tokens = GetU32(bytes.data() + 8);
      const std::uint32_t h_dim = GetU32(bytes.data() + 12);
      if (h_layers != src.n_layers || h_tokens != doc.n_tokens ||
          h_dim != src.dim) {
        throw HeaderMismatchError(
            path.string() + ": header (n_layers=" + std::to_string(h_layers) +
            ", n_tokens=" + std::to_string(h_tokens) +
            ", dim=" + std::to_string(h_dim) +
            ") disagrees with manifest (n_layers=" +
            std::to_string(src.n_layers) +
            ", n_tokens=" + std::to_string(doc.n_tokens) +
            ", dim=" + std::to_string(src.dim) + ")");
      }
      const std::size_t n_values = src.n_layers * doc.n_tokens * src.dim;
      const std::size_t expected = kPayloadHeaderBytes + 4 * n_values;
      if (bytes.size() != expected) {
        throw PayloadLengthError(path.string() + ": expected " +
                                 std::to_string(expected) + " bytes, got " +
                                 std::to_string(bytes.size()));
      }
      auto out = bank.payload(s, d);
      const unsigned char* p = bytes.data() + kPayloadHeaderBytes;
      for (std::size_t i = 0; i < n_values; ++i, p += 4) {
        const float f = std::bit_cast<float>(GetU32(p));
        if (!std::isfinite(f)) {
          throw NonFiniteError(path.string() + ": non-finite value at index " +
                               std::to_string(i));
        }
        out[i] = f;
      }
    }
  }
  return bank;
}

}  // namespace rprobe
