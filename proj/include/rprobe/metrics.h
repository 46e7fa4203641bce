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

#ifndef RPROBE_METRICS_H_
#define RPROBE_METRICS_H_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rprobe/corpus.h"
#include "rprobe/matrix.h"
#include "rprobe/util.h"

namespace rprobe {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static PRF From(double precision, double recall);
};

// Numerators and denominators of one metric. Summing these over documents
// and dividing once gives the corpus-level (micro-averaged) score.
struct MetricCounts {
  double recall_num = 0.0;
  double recall_den = 0.0;
  double precision_num = 0.0;
  double precision_den = 0.0;

  MetricCounts& operator+=(const MetricCounts& o);
  PRF Score() const;
};

MetricCounts muc_counts(const Clustering& gold, const Clustering& pred);
MetricCounts b_cubed_counts(const Clustering& gold, const Clustering& pred);

enum class CeafSimilarity { kMention, kEntity };
MetricCounts ceaf_counts(const Clustering& gold, const Clustering& pred,
                         CeafSimilarity phi);

PRF muc(const Clustering& gold, const Clustering& pred);
PRF b_cubed(const Clustering& gold, const Clustering& pred);
PRF ceaf(const Clustering& gold, const Clustering& pred, CeafSimilarity phi);

// Mean of MUC, B³ and entity-based CEAF F1.
double conll_f1(double muc_f1, double b3_f1, double ceaf_e_f1);

// Minimum-cost one-to-one assignment on a rectangular cost matrix. Returns
// min(rows, cols) (row, col) pairs sorted by row.
std::vector<std::pair<std::size_t, std::size_t>> hungarian(const Matrix& cost);

struct MetricReport {
  PRF muc;
  PRF b3;
  PRF ceaf_m;
  PRF ceaf_e;
  double conll_f1 = 0.0;
};

// Accumulates per-document counts for a corpus-level report.
class MetricAccumulator {
 public:
  void Add(const Clustering& gold, const Clustering& pred);
  MetricReport Report() const;

 private:
  MetricCounts muc_;
  MetricCounts b3_;
  MetricCounts ceaf_m_;
  MetricCounts ceaf_e_;
};

MetricReport score_documents(const std::vector<ScoredDocument>& gold,
                             const std::vector<ScoredDocument>& pred);

Json to_json(const PRF& prf);
Json to_json(const MetricReport& report);
MetricReport metric_report_from_json(const Json& j);
// Fixed-width plain-text table, one row per metric.
std::string format_table(const MetricReport& report);

}  // namespace rprobe

#endif  // RPROBE_METRICS_H_
