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

// Test-only helpers: finite-difference gradient checks, random fixtures and
// scratch directories.

#ifndef RPROBE_TESTS_SUPPORT_H_
#define RPROBE_TESTS_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rprobe/corpus.h"
#include "rprobe/matrix.h"
#include "rprobe/rng.h"
#include "rprobe/tape.h"

namespace rprobe::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t n_entries = 0;
};

// Compares tape gradients of `loss` with central differences for every entry
// of every leaf in `leaves`. Per leaf the error is ||a - n|| / (||a|| + ||n||)
// (0 when both vanish). The tape structure, including any discrete choices
// made while recording, is held fixed and values are recomputed with
// Replay(). Leaves are restored afterwards.
inline GradCheck check_gradients(Tape& tape, Var loss,
                                 std::span<const Var> leaves,
                                 double h = 1e-6) {
  tape.Backward(loss);
  GradCheck out;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Var leaf = leaves[li];
    const Matrix analytic = tape.grad(leaf);
    const Matrix original = tape.value(leaf);
    Matrix numeric(original.rows(), original.cols());
    for (std::size_t k = 0; k < original.size(); ++k) {
      Matrix probe = original;
      probe.data()[k] = original.data()[k] + h;
      tape.SetLeafValue(leaf, probe);
      tape.Replay();
      const double up = tape.value(loss)(0, 0);
      probe.data()[k] = original.data()[k] - h;
      tape.SetLeafValue(leaf, probe);
      tape.Replay();
      const double down = tape.value(loss)(0, 0);
      numeric.data()[k] = (up - down) / (2.0 * h);
      ++out.n_entries;
    }
    tape.SetLeafValue(leaf, original);
    tape.Replay();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < original.size(); ++k) {
      const double a = analytic.data()[k];
      const double n = numeric.data()[k];
      diff += (a - n) * (a - n);
      na += a * a;
      nn += n * n;
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    const double rel = denom < 1e-12 ? 0.0 : std::sqrt(diff) / denom;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_leaf = li;
    }
  }
  return out;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                            double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = scale * rng.Normal();
  return m;
}

// Random partition of mentions 0..n_mentions-1 (as width-1 spans) into at
// most `max_clusters` clusters; singletons kept unless `drop_singletons`.
inline Clustering random_clustering(std::size_t n_mentions,
                                    std::size_t max_clusters, Rng& rng,
                                    bool drop_singletons = false) {
  Clustering c(max_clusters);
  for (std::size_t m = 0; m < n_mentions; ++m) {
    if (rng.Uniform() < 0.2) continue;  // mention absent from this side
    c[rng.Below(max_clusters)].push_back({m, m});
  }
  Clustering out;
  for (Cluster& k : c) {
    if (k.empty() || (drop_singletons && k.size() < 2)) continue;
    out.push_back(std::move(k));
  }
  canonicalize(out);
  return out;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rprobe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rprobe::testing

#endif  // RPROBE_TESTS_SUPPORT_H_
