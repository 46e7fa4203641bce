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

#include "rprobe/probes.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rprobe/errors.h"
#include "rprobe/rng.h"

namespace rprobe {
namespace {

struct TokenRef {
  std::size_t doc;
  std::size_t token;
};

// Concatenated selected-layer vector of one token.
void TokenVector(const EmbeddingBank& bank, const SlotInfo& slot,
                 const TokenRef& ref, std::vector<double>& out) {
  const SourceDescriptor& src = bank.sources()[slot.source];
  const std::size_t n_tokens = bank.documents()[ref.doc].n_tokens;
  const auto payload = bank.payload(slot.source, ref.doc);
  out.clear();
  for (std::size_t layer : slot.layers) {
    const std::size_t base = ((layer - 1) * n_tokens + ref.token) * src.dim;
    for (std::size_t k = 0; k < src.dim; ++k)
      out.push_back(static_cast<double>(payload[base + k]));
  }
}

std::string Fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

std::string CsvNumber(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  const double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  return std::clamp(c, -1.0, 1.0);
}

CosineReport cosine_probe(const EmbeddingBank& bank,
                          const std::string& reference,
                          const LayerSpec& layer_spec,
                          const ProbeOptions& options) {
  if (!bank.HasSource(reference)) {
    throw LookupError("unknown reference source '" + reference + "'");
  }
  if (options.n_batches < 1 || options.batch_size < 1) {
    throw DomainError("probe needs at least one batch of one token");
  }
  const auto slots = plan_slots(bank, layer_spec, WithinSource::kConcat);
  const SlotInfo* ref = nullptr;
  for (const SlotInfo& s : slots)
    if (bank.sources()[s.source].name == reference) ref = &s;
  if (ref == nullptr) {
    throw LookupError("reference source '" + reference +
                      "' has no layer selection");
  }
  for (const SlotInfo& s : slots) {
    if (s.width != ref->width) {
      throw ShapeError("probe source " + s.label + " has width " +
                       std::to_string(s.width) + " but reference " +
                       ref->label + " has width " + std::to_string(ref->width));
    }
  }

  std::size_t total = 0;
  for (const DocumentEntry& d : bank.documents()) total += d.n_tokens;
  if (total == 0) throw DomainError("probe: bank holds no tokens");
  std::vector<std::size_t> doc_start;
  std::size_t offset = 0;
  for (const DocumentEntry& d : bank.documents()) {
    doc_start.push_back(offset);
    offset += d.n_tokens;
  }

  Rng rng = Rng::Derive(options.seed, "probe/sample");
  const std::size_t n = options.n_batches * options.batch_size;
  std::vector<TokenRef> sample;
  sample.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t g = rng.Below(total);
    std::size_t doc = 0;
    while (doc + 1 < doc_start.size() && doc_start[doc + 1] <= g) ++doc;
    sample.push_back({doc, g - doc_start[doc]});
  }

  CosineReport report;
  report.reference = reference;
  std::vector<double> a, b;
  for (const SlotInfo& s : slots) {
    double sum = 0.0;
    for (const TokenRef& t : sample) {
      TokenVector(bank, s, t, a);
      TokenVector(bank, *ref, t, b);
      sum += cosine(a, b);
    }
    report.entries.push_back({bank.sources()[s.source].name,
                              sum / static_cast<double>(n), n,
                              options.n_batches});
  }
  return report;
}

AttentionTrajectory attention_trajectory(const std::vector<EpochRecord>& history) {
  AttentionTrajectory out;
  for (const EpochRecord& r : history) {
    if (r.alpha_means.empty()) {
      throw MissingDataError("epoch " + std::to_string(r.epoch) +
                             " has no attention weights; the run did not use "
                             "attention aggregation");
    }
    double sum = 0.0;
    for (double a : r.alpha_means) {
      if (!(a >= -1e-6 && a <= 1.0 + 1e-6)) {
        throw DomainError("epoch " + std::to_string(r.epoch) +
                          ": attention weight outside [0, 1]");
      }
      sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw DomainError("epoch " + std::to_string(r.epoch) +
                        ": attention weights sum to " + CsvNumber(sum));
    }
    out.epochs.push_back(r.epoch);
    out.alpha_means.push_back(r.alpha_means);
  }
  if (out.epochs.empty()) throw MissingDataError("history is empty");
  return out;
}

RunAggregate aggregate_runs(std::span<const double> values) {
  if (values.empty()) throw DomainError("aggregate_runs: no results");
  RunAggregate out;
  out.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(out.n - 1));
  }
  return out;
}

std::string format_aggregate(const RunAggregate& a) {
  return Fixed2(a.mean) + "±" + Fixed2(a.stddev);
}

Json to_json(const CosineReport& report) {
  Json entries = Json::array();
  for (const CosineEntry& e : report.entries) {
    entries.push_back({{"source", e.source},
                       {"mean_cosine", e.mean_cosine},
                       {"n_tokens", e.n_tokens},
                       {"n_batches", e.n_batches}});
  }
  return {{"reference", report.reference}, {"sources", entries}};
}

std::string cosine_report_csv(const CosineReport& report) {
  std::string out = "source,mean_cosine,n_tokens,n_batches\n";
  for (const CosineEntry& e : report.entries) {
    out += e.source + "," + CsvNumber(e.mean_cosine) + "," +
           std::to_string(e.n_tokens) + "," + std::to_string(e.n_batches) + "\n";
  }
  return out;
}

Json to_json(const AttentionTrajectory& t,
             const std::vector<std::string>& slot_labels) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < t.epochs.size(); ++i)
    rows.push_back({{"epoch", t.epochs[i]}, {"alpha_means", t.alpha_means[i]}});
  return {{"slots", slot_labels}, {"epochs", rows}};
}

std::string trajectory_csv(const AttentionTrajectory& t,
                           const std::vector<std::string>& slot_labels) {
  std::string out = "epoch";
  for (const std::string& l : slot_labels) out += "," + l;
  out += "\n";
  for (std::size_t i = 0; i < t.epochs.size(); ++i) {
    if (t.alpha_means[i].size() != slot_labels.size()) {
      throw ShapeError("trajectory row has " +
                       std::to_string(t.alpha_means[i].size()) +
                       " weights for " + std::to_string(slot_labels.size()) +
                       " slots");
    }
    out += std::to_string(t.epochs[i]);
    for (double a : t.alpha_means[i]) out += "," + CsvNumber(a);
    out += "\n";
  }
  return out;
}

}  // namespace rprobe
