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

#ifndef RPROBE_CORPUS_H_
#define RPROBE_CORPUS_H_

#include <compare>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "rprobe/util.h"

namespace rprobe {

// Token span [start, end], inclusive, 0-based.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t width() const { return end - start + 1; }
  friend auto operator<=>(const Span&, const Span&) = default;
};

// A set of entity clusters, each a set of mentions.
using Cluster = std::vector<Span>;
using Clustering = std::vector<Cluster>;

struct CorefDocument {
  std::string doc_id;
  std::vector<std::string> tokens;
  Clustering clusters;
  // "train", "dev", or empty when the corpus carries no explicit split.
  std::string split;
};

// Sorts mentions inside clusters and clusters by first mention.
void canonicalize(Clustering& clustering);

// Checks the gold-corpus invariants: spans in bounds with start <= end, no
// mention repeated within or across clusters, every cluster with >= 2
// mentions. Throws CorpusError.
void validate_document(const CorefDocument& doc);

// JSON-lines: {"doc_id", "tokens", "clusters": [[[s,e],...],...]} with an
// optional "split" key. read_corpus validates every document.
std::vector<CorefDocument> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path,
                  const std::vector<CorefDocument>& docs);

// Lenient reader for scoring inputs: only doc_id and clusters are required,
// singleton clusters are allowed, duplicates are still rejected.
struct ScoredDocument {
  std::string doc_id;
  Clustering clusters;
};
std::vector<ScoredDocument> read_clusterings(const std::filesystem::path& path);

Json clustering_to_json(const Clustering& clustering);
Clustering clustering_from_json(const Json& j, const std::string& where);

}  // namespace rprobe

#endif  // RPROBE_CORPUS_H_
