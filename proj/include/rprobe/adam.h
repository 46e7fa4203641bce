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

#ifndef RPROBE_ADAM_H_
#define RPROBE_ADAM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "rprobe/matrix.h"

namespace rprobe {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  // Zero accumulators shaped like `params`.
  static AdamState ZerosLike(std::span<const Matrix> params);
};

// One bias-corrected Adam update, in place. Throws ShapeError if params,
// grads and accumulators disagree in count or shape.
void adam_step(std::span<Matrix> params, std::span<const Matrix> grads,
               AdamState& state, const AdamConfig& config);

// Rescales grads so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_global_norm(std::span<Matrix> grads, double max_norm);

}  // namespace rprobe

#endif  // RPROBE_ADAM_H_
