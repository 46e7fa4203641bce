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

#include "rprobe/metrics.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "rprobe/errors.h"

namespace rprobe {
namespace {

// Mention -> cluster index.
std::map<Span, std::size_t> Index(const Clustering& c) {
  std::map<Span, std::size_t> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (const Span& s : c[i]) out.emplace(s, i);
  return out;
}

std::size_t Overlap(const Cluster& a, const std::map<Span, std::size_t>& b_index,
                    std::size_t b_cluster) {
  std::size_t n = 0;
  for (const Span& s : a) {
    auto it = b_index.find(s);
    if (it != b_index.end() && it->second == b_cluster) ++n;
  }
  return n;
}

// Σ (|K| - |partition of K by other|) and Σ (|K| - 1) over clusters K of
// `keys`; mentions absent from `other` form singleton parts.
std::pair<double, double> MucSide(const Clustering& keys,
                                  const Clustering& other) {
  const auto other_index = Index(other);
  double num = 0.0;
  double den = 0.0;
  for (const Cluster& k : keys) {
    std::set<std::size_t> parts;
    std::size_t loose = 0;
    for (const Span& s : k) {
      auto it = other_index.find(s);
      if (it == other_index.end()) {
        ++loose;
      } else {
        parts.insert(it->second);
      }
    }
    num += static_cast<double>(k.size() - parts.size() - loose);
    den += static_cast<double>(k.size() - 1);
  }
  return {num, den};
}

// Σ over mentions m of `keys` of |K(m) ∩ O(m)| / |K(m)|, and the mention
// count.
std::pair<double, double> B3Side(const Clustering& keys,
                                 const Clustering& other) {
  const auto other_index = Index(other);
  double num = 0.0;
  double den = 0.0;
  for (const Cluster& k : keys) {
    std::map<std::size_t, std::size_t> overlap;
    for (const Span& s : k) {
      auto it = other_index.find(s);
      if (it != other_index.end()) ++overlap[it->second];
    }
    for (const Span& s : k) {
      auto it = other_index.find(s);
      if (it != other_index.end()) {
        num += static_cast<double>(overlap[it->second]) /
               static_cast<double>(k.size());
      }
    }
    den += static_cast<double>(k.size());
  }
  return {num, den};
}

double Phi(std::size_t overlap, std::size_t a, std::size_t b,
           CeafSimilarity phi) {
  if (phi == CeafSimilarity::kMention) return static_cast<double>(overlap);
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(a + b);
}

std::string Fixed(double x, int width, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%*.*f", width, precision, x);
  return buf;
}

}  // namespace

PRF PRF::From(double precision, double recall) {
  PRF out{precision, recall, 0.0};
  if (precision + recall > 0.0)
    out.f1 = 2.0 * precision * recall / (precision + recall);
  return out;
}

MetricCounts& MetricCounts::operator+=(const MetricCounts& o) {
  recall_num += o.recall_num;
  recall_den += o.recall_den;
  precision_num += o.precision_num;
  precision_den += o.precision_den;
  return *this;
}

PRF MetricCounts::Score() const {
  const double r = recall_den > 0.0 ? recall_num / recall_den : 0.0;
  const double p = precision_den > 0.0 ? precision_num / precision_den : 0.0;
  return PRF::From(p, r);
}

MetricCounts muc_counts(const Clustering& gold, const Clustering& pred) {
  const auto [rn, rd] = MucSide(gold, pred);
  const auto [pn, pd] = MucSide(pred, gold);
  return {rn, rd, pn, pd};
}

MetricCounts b_cubed_counts(const Clustering& gold, const Clustering& pred) {
  const auto [rn, rd] = B3Side(gold, pred);
  const auto [pn, pd] = B3Side(pred, gold);
  return {rn, rd, pn, pd};
}

MetricCounts ceaf_counts(const Clustering& gold, const Clustering& pred,
                         CeafSimilarity phi) {
  MetricCounts out;
  for (const Cluster& g : gold) out.recall_den += Phi(g.size(), g.size(), g.size(), phi);
  for (const Cluster& p : pred) out.precision_den += Phi(p.size(), p.size(), p.size(), phi);
  if (gold.empty() || pred.empty()) return out;

  const auto pred_index = Index(pred);
  Matrix sim(gold.size(), pred.size());
  for (std::size_t i = 0; i < gold.size(); ++i)
    for (std::size_t j = 0; j < pred.size(); ++j)
      sim(i, j) = Phi(Overlap(gold[i], pred_index, j), gold[i].size(),
                      pred[j].size(), phi);
  Matrix cost = sim;
  for (double& x : cost.data()) x = -x;
  // Summed in ascending order so that tied optimal alignments with the same
  // similarity values give bitwise-equal totals.
  std::vector<double> aligned;
  for (const auto& [i, j] : hungarian(cost)) aligned.push_back(sim(i, j));
  std::sort(aligned.begin(), aligned.end());
  double total = 0.0;
  for (double x : aligned) total += x;
  out.recall_num = total;
  out.precision_num = total;
  return out;
}

PRF muc(const Clustering& gold, const Clustering& pred) {
  return muc_counts(gold, pred).Score();
}

PRF b_cubed(const Clustering& gold, const Clustering& pred) {
  return b_cubed_counts(gold, pred).Score();
}

PRF ceaf(const Clustering& gold, const Clustering& pred, CeafSimilarity phi) {
  return ceaf_counts(gold, pred, phi).Score();
}

double conll_f1(double muc_f1, double b3_f1, double ceaf_e_f1) {
  return (muc_f1 + b3_f1 + ceaf_e_f1) / 3.0;
}

std::vector<std::pair<std::size_t, std::size_t>> hungarian(const Matrix& cost) {
  if (cost.empty()) return {};
  if (!cost.AllFinite()) throw DomainError("hungarian: non-finite cost");
  const std::size_t n = std::max(cost.rows(), cost.cols());
  // Square, zero-padded, 1-based potentials formulation: rows are added one
  // at a time and an augmenting path of minimal reduced cost is grown from
  // each new row.
  auto c = [&](std::size_t i, std::size_t j) {
    return (i <= cost.rows() && j <= cost.cols()) ? cost(i - 1, j - 1) : 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> min_v(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0, j) - u[i0] - v[j];
        if (cur < min_v[j]) {
          min_v[j] = cur;
          way[j] = j0;
        }
        if (min_v[j] < delta) {
          delta = min_v[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          min_v[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = match[j];
    if (i >= 1 && i <= cost.rows() && j <= cost.cols()) out.emplace_back(i - 1, j - 1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void MetricAccumulator::Add(const Clustering& gold, const Clustering& pred) {
  muc_ += muc_counts(gold, pred);
  b3_ += b_cubed_counts(gold, pred);
  ceaf_m_ += ceaf_counts(gold, pred, CeafSimilarity::kMention);
  ceaf_e_ += ceaf_counts(gold, pred, CeafSimilarity::kEntity);
}

MetricReport MetricAccumulator::Report() const {
  MetricReport r;
  r.muc = muc_.Score();
  r.b3 = b3_.Score();
  r.ceaf_m = ceaf_m_.Score();
  r.ceaf_e = ceaf_e_.Score();
  r.conll_f1 = conll_f1(r.muc.f1, r.b3.f1, r.ceaf_e.f1);
  return r;
}

MetricReport score_documents(const std::vector<ScoredDocument>& gold,
                             const std::vector<ScoredDocument>& pred) {
  std::map<std::string, const Clustering*> by_id;
  for (const auto& d : pred) by_id[d.doc_id] = &d.clusters;
  std::set<std::string> gold_ids;
  MetricAccumulator acc;
  const Clustering empty;
  for (const auto& d : gold) {
    gold_ids.insert(d.doc_id);
    auto it = by_id.find(d.doc_id);
    acc.Add(d.clusters, it == by_id.end() ? empty : *it->second);
  }
  for (const auto& d : pred) {
    if (!gold_ids.contains(d.doc_id)) {
      throw CorpusError("prediction for unknown doc_id '" + d.doc_id + "'");
    }
  }
  return acc.Report();
}

Json to_json(const PRF& prf) {
  return {{"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1}};
}

Json to_json(const MetricReport& r) {
  return {{"muc", to_json(r.muc)},
          {"b3", to_json(r.b3)},
          {"ceaf_m", to_json(r.ceaf_m)},
          {"ceaf_e", to_json(r.ceaf_e)},
          {"conll_f1", r.conll_f1}};
}

MetricReport metric_report_from_json(const Json& j) {
  auto prf = [&](const char* key) {
    const Json& p = j.at(key);
    return PRF{p.at("precision").get<double>(), p.at("recall").get<double>(),
               p.at("f1").get<double>()};
  };
  try {
    MetricReport r;
    r.muc = prf("muc");
    r.b3 = prf("b3");
    r.ceaf_m = prf("ceaf_m");
    r.ceaf_e = prf("ceaf_e");
    r.conll_f1 = j.at("conll_f1").get<double>();
    return r;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed metric report: ") + e.what());
  }
}

std::string format_table(const MetricReport& r) {
  std::string out = "metric     precision    recall        f1\n";
  auto line = [&](const char* name, const PRF& p) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%-9s", name);
    out += buf;
    out += Fixed(p.precision * 100, 11, 2) + Fixed(p.recall * 100, 10, 2) +
           Fixed(p.f1 * 100, 10, 2) + "\n";
  };
  line("MUC", r.muc);
  line("B3", r.b3);
  line("CEAF-m", r.ceaf_m);
  line("CEAF-e", r.ceaf_e);
  out += "CoNLL F1 " + Fixed(r.conll_f1 * 100, 31, 2) + "\n";
  return out;
}

}  // namespace rprobe
