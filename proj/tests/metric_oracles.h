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

// Brute-force references for the coreference metrics: exhaustive clustering
// enumeration, permutation-search CEAF and permutation-search assignment.

#ifndef RPROBE_TESTS_METRIC_ORACLES_H_
#define RPROBE_TESTS_METRIC_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "rprobe/corpus.h"
#include "rprobe/matrix.h"
#include "rprobe/metrics.h"

namespace rprobe::testing {

// Every clustering of mentions 0..n-1 (width-1 spans) in which each mention
// is either absent or belongs to one cluster. Singleton clusters are kept.
// The count is Bell(n + 1).
inline std::vector<Clustering> all_partial_clusterings(std::size_t n) {
  std::vector<Clustering> out;
  // label[m] == 0 means absent; labels > 0 follow restricted growth.
  std::vector<std::size_t> label(n, 0);
  auto emit = [&] {
    std::size_t k = 0;
    for (std::size_t x : label) k = std::max(k, x);
    Clustering c(k);
    for (std::size_t m = 0; m < n; ++m)
      if (label[m] > 0) c[label[m] - 1].push_back({m, m});
    canonicalize(c);
    out.push_back(std::move(c));
  };
  auto rec = [&](auto&& self, std::size_t m, std::size_t used) -> void {
    if (m == n) {
      emit();
      return;
    }
    for (std::size_t l = 0; l <= used + 1; ++l) {
      label[m] = l;
      self(self, m + 1, std::max(used, l));
    }
  };
  rec(rec, 0, 0);
  return out;
}

inline double phi_oracle(const Cluster& a, const Cluster& b, CeafSimilarity phi) {
  const std::set<Span> sa(a.begin(), a.end());
  double overlap = 0.0;
  for (const Span& s : b) overlap += sa.count(s);
  if (phi == CeafSimilarity::kMention) return overlap;
  return 2.0 * overlap / static_cast<double>(a.size() + b.size());
}

// CEAF by trying every alignment. Aligned similarities are summed in
// ascending order so that the result is comparable bit for bit.
inline PRF ceaf_bruteforce(const Clustering& gold, const Clustering& pred,
                           CeafSimilarity phi) {
  double gold_mass = 0.0, pred_mass = 0.0;
  for (const Cluster& g : gold) gold_mass += phi_oracle(g, g, phi);
  for (const Cluster& p : pred) pred_mass += phi_oracle(p, p, phi);
  const std::size_t n = std::max(gold.size(), pred.size());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  if (!gold.empty() && !pred.empty()) {
    do {
      std::vector<double> aligned;
      for (std::size_t i = 0; i < gold.size(); ++i)
        if (perm[i] < pred.size()) aligned.push_back(phi_oracle(gold[i], pred[perm[i]], phi));
      std::sort(aligned.begin(), aligned.end());
      double total = 0.0;
      for (double x : aligned) total += x;
      best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  const double r = gold_mass > 0.0 ? best / gold_mass : 0.0;
  const double p = pred_mass > 0.0 ? best / pred_mass : 0.0;
  return PRF::From(p, r);
}

// Minimum total cost over all one-to-one assignments of min(rows, cols)
// pairs.
inline double min_assignment_bruteforce(const Matrix& cost) {
  const std::size_t n = std::max(cost.rows(), cost.cols());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < cost.rows(); ++i)
      if (perm[i] < cost.cols()) total += cost(i, perm[i]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline bool in_unit_range(const PRF& m) {
  auto ok = [](double x) { return x >= 0.0 && x <= 1.0 && std::isfinite(x); };
  return ok(m.precision) && ok(m.recall) && ok(m.f1);
}

// {a,b,c,d} in one gold cluster; prediction {a,b},{c,d}.
inline Clustering worked_gold() { return {{{0, 0}, {1, 1}, {2, 2}, {3, 3}}}; }
inline Clustering worked_pred() { return {{{0, 0}, {1, 1}}, {{2, 2}, {3, 3}}}; }

}  // namespace rprobe::testing

#endif  // RPROBE_TESTS_METRIC_ORACLES_H_
