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

#include "rprobe/parameters.h"

#include <cmath>

#include "rprobe/errors.h"

namespace rprobe {

ParamId ParameterStore::Add(std::string name, Matrix value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

ParamId ParameterStore::Find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw LookupError("unknown parameter '" + name + "'");
}

BoundParams::BoundParams(Tape& tape, const ParameterStore& store) {
  vars_.reserve(store.size());
  for (const Matrix& m : store.values()) vars_.push_back(tape.Leaf(m));
}

std::vector<Matrix> BoundParams::Gradients(const Tape& tape) const {
  std::vector<Matrix> out;
  out.reserve(vars_.size());
  for (Var v : vars_) out.push_back(tape.grad(v));
  return out;
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.Uniform(-limit, limit);
  return m;
}

}  // namespace rprobe
