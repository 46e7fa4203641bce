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

#include "rprobe/corpus.h"

#include <algorithm>
#include <set>
#include <sstream>

#include "rprobe/errors.h"

namespace rprobe {

namespace fs = std::filesystem;

void canonicalize(Clustering& clustering) {
  for (auto& c : clustering) std::sort(c.begin(), c.end());
  std::sort(clustering.begin(), clustering.end(),
            [](const Cluster& a, const Cluster& b) {
              if (a.empty() || b.empty()) return a.size() < b.size();
              return a.front() < b.front();
            });
}

namespace {

void CheckNoDuplicates(const Clustering& clusters, const std::string& where) {
  std::set<Span> seen;
  for (const auto& c : clusters) {
    for (const Span& s : c) {
      if (!seen.insert(s).second) {
        throw CorpusError(where + ": mention [" + std::to_string(s.start) +
                          "," + std::to_string(s.end) + "] appears twice");
      }
    }
  }
}

std::vector<Json> ReadJsonLines(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) +
                        ": invalid JSON: " + e.what());
    }
  }
  return out;
}

std::string DocId(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string()) {
    throw CorpusError(where + ": missing string 'doc_id'");
  }
  return j["doc_id"].get<std::string>();
}

}  // namespace

void validate_document(const CorefDocument& doc) {
  const std::string where = "document '" + doc.doc_id + "'";
  for (const auto& c : doc.clusters) {
    if (c.size() < 2) {
      throw CorpusError(where + ": cluster with " + std::to_string(c.size()) +
                        " mention(s); gold clusters need at least 2");
    }
    for (const Span& s : c) {
      if (s.start > s.end || s.end >= doc.tokens.size()) {
        throw CorpusError(where + ": span [" + std::to_string(s.start) + "," +
                          std::to_string(s.end) + "] outside 0.." +
                          std::to_string(doc.tokens.size()));
      }
    }
  }
  CheckNoDuplicates(doc.clusters, where);
  if (!doc.split.empty() && doc.split != "train" && doc.split != "dev") {
    throw CorpusError(where + ": split must be \"train\" or \"dev\"");
  }
}

Json clustering_to_json(const Clustering& clustering) {
  Json out = Json::array();
  for (const auto& c : clustering) {
    Json jc = Json::array();
    for (const Span& s : c) jc.push_back({s.start, s.end});
    out.push_back(std::move(jc));
  }
  return out;
}

Clustering clustering_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw CorpusError(where + ": 'clusters' must be an array");
  Clustering out;
  for (const auto& jc : j) {
    if (!jc.is_array()) throw CorpusError(where + ": cluster must be an array");
    Cluster c;
    for (const auto& js : jc) {
      if (!js.is_array() || js.size() != 2 || !js[0].is_number_unsigned() ||
          !js[1].is_number_unsigned()) {
        throw CorpusError(where + ": mention must be [start, end]");
      }
      Span s{js[0].get<std::size_t>(), js[1].get<std::size_t>()};
      if (s.start > s.end) {
        throw CorpusError(where + ": span start after end");
      }
      c.push_back(s);
    }
    if (c.empty()) throw CorpusError(where + ": empty cluster");
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CorefDocument> read_corpus(const fs::path& path) {
  std::vector<CorefDocument> docs;
  std::set<std::string> ids;
  for (const Json& j : ReadJsonLines(path)) {
    CorefDocument doc;
    doc.doc_id = DocId(j, path.string());
    const std::string where = path.string() + " doc '" + doc.doc_id + "'";
    if (!j.contains("tokens") || !j["tokens"].is_array()) {
      throw CorpusError(where + ": missing 'tokens' array");
    }
    for (const auto& t : j["tokens"]) {
      if (!t.is_string()) throw CorpusError(where + ": tokens must be strings");
      doc.tokens.push_back(t.get<std::string>());
    }
    doc.clusters = clustering_from_json(j.value("clusters", Json::array()), where);
    if (j.contains("split")) {
      if (!j["split"].is_string()) throw CorpusError(where + ": bad 'split'");
      doc.split = j["split"].get<std::string>();
    }
    validate_document(doc);
    canonicalize(doc.clusters);
    if (!ids.insert(doc.doc_id).second) {
      throw CorpusError(path.string() + ": duplicate doc_id '" + doc.doc_id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_corpus(const fs::path& path, const std::vector<CorefDocument>& docs) {
  std::string out;
  for (const auto& doc : docs) {
    Json j;
    j["doc_id"] = doc.doc_id;
    j["tokens"] = doc.tokens;
    j["clusters"] = clustering_to_json(doc.clusters);
    if (!doc.split.empty()) j["split"] = doc.split;
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<ScoredDocument> read_clusterings(const fs::path& path) {
  std::vector<ScoredDocument> out;
  std::set<std::string> ids;
  for (const Json& j : ReadJsonLines(path)) {
    ScoredDocument d;
    d.doc_id = DocId(j, path.string());
    const std::string where = path.string() + " doc '" + d.doc_id + "'";
    d.clusters = clustering_from_json(j.value("clusters", Json::array()), where);
    CheckNoDuplicates(d.clusters, where);
    canonicalize(d.clusters);
    if (!ids.insert(d.doc_id).second) {
      throw CorpusError(path.string() + ": duplicate doc_id '" + d.doc_id + "'");
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace rprobe
