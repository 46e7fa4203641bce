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

#ifndef RPROBE_PROBES_H_
#define RPROBE_PROBES_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rprobe/bank.h"
#include "rprobe/fusion.h"
#include "rprobe/trainer.h"
#include "rprobe/util.h"

namespace rprobe {

struct CosineEntry {
  std::string source;
  double mean_cosine = 0.0;
  std::size_t n_tokens = 0;
  std::size_t n_batches = 0;
};

struct CosineReport {
  std::string reference;
  std::vector<CosineEntry> entries;  // bank manifest order
};

struct ProbeOptions {
  std::size_t n_batches = 15;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

// Mean cosine between each source's selected-layer token vectors and the
// reference source's, over n_batches × batch_size tokens drawn uniformly
// with replacement from the whole bank. Multi-layer windows are
// concatenated. Zero vectors count as cosine 0. Throws LookupError for an
// unknown reference and ShapeError when a source's width differs from the
// reference's.
CosineReport cosine_probe(const EmbeddingBank& bank,
                          const std::string& reference,
                          const LayerSpec& layer_spec,
                          const ProbeOptions& options);

// Cosine similarity, 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

struct AttentionTrajectory {
  std::vector<std::size_t> epochs;
  std::vector<std::vector<double>> alpha_means;  // per epoch, slot order
};

// Throws MissingDataError when the history carries no attention weights and
// DomainError when a row leaves the probability simplex by more than 1e-6.
AttentionTrajectory attention_trajectory(const std::vector<EpochRecord>& history);

struct RunAggregate {
  double mean = 0.0;
  double stddev = 0.0;  // n-1 denominator, 0 for a single value
  std::size_t n = 0;
};

// Throws DomainError on an empty list.
RunAggregate aggregate_runs(std::span<const double> values);
// "mean±stddev" with two decimals, e.g. "58.40±1.25".
std::string format_aggregate(const RunAggregate& aggregate);

Json to_json(const CosineReport& report);
std::string cosine_report_csv(const CosineReport& report);
Json to_json(const AttentionTrajectory& trajectory,
             const std::vector<std::string>& slot_labels);
std::string trajectory_csv(const AttentionTrajectory& trajectory,
                           const std::vector<std::string>& slot_labels);

}  // namespace rprobe

#endif  // RPROBE_PROBES_H_
