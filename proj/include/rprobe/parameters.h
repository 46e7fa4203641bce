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

#ifndef RPROBE_PARAMETERS_H_
#define RPROBE_PARAMETERS_H_

#include <cstddef>
#include <string>
#include <vector>

#include "rprobe/matrix.h"
#include "rprobe/rng.h"
#include "rprobe/tape.h"

namespace rprobe {

using ParamId = std::size_t;

// Named trainable tensors in a fixed insertion order.
class ParameterStore {
 public:
  ParamId Add(std::string name, Matrix value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_[id]; }
  Matrix& value(ParamId id) { return values_[id]; }
  const Matrix& value(ParamId id) const { return values_[id]; }
  std::vector<Matrix>& values() { return values_; }
  const std::vector<Matrix>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }

  // Throws LookupError for an unknown name.
  ParamId Find(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

// Parameters placed on a tape as leaves, indexed by ParamId.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParameterStore& store);
  Var operator[](ParamId id) const { return vars_[id]; }
  // Gradients in store order; call after tape.Backward().
  std::vector<Matrix> Gradients(const Tape& tape) const;

 private:
  std::vector<Var> vars_;
};

// Uniform in ±sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace rprobe

#endif  // RPROBE_PARAMETERS_H_
