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

#ifndef RPROBE_TAPE_H_
#define RPROBE_TAPE_H_

#include <cstddef>
#include <span>
#include <vector>

#include "rprobe/matrix.h"

namespace rprobe {

// Handle to a node recorded on a Tape. Only meaningful for the tape that
// produced it.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode differentiation over matrix-valued primitives.
//
// Every operation evaluates eagerly and appends a node; node ids are
// assigned in recording order, so inputs always precede their consumers and
// reverse id order is a valid reverse topological order. A tape is
// single-owner: do not share it across threads while recording.
//
// Leaves are either parameters or constants; both receive gradients, callers
// simply ignore the ones they do not need.
class Tape {
 public:
  enum class Op {
    kLeaf,
    kMatMul,
    kAdd,
    kSub,
    kAddRowBroadcast,
    kMul,
    kMulColBroadcast,
    kScale,
    kConcatCols,
    kConcatRows,
    kMean,
    kSumAll,
    kSoftmaxRows,
    kTanh,
    kRelu,
    kL2NormalizeRows,
    kGatherRows,
    kLogSumExpRows,
    kTranspose,
    kReshape,
    kSliceCols,
  };

  Var Leaf(Matrix value);

  Var MatMul(Var a, Var b);
  Var Add(Var a, Var b);
  Var Sub(Var a, Var b);
  // a [n×m] + b [1×m] broadcast over rows.
  Var AddRowBroadcast(Var a, Var b);
  Var Mul(Var a, Var b);
  // Row r of a [n×m] scaled by c(r,0), c being n×1.
  Var MulColBroadcast(Var a, Var c);
  Var Scale(Var a, double s);
  Var ConcatCols(std::span<const Var> parts);
  Var ConcatRows(std::span<const Var> parts);
  // Elementwise mean of equally shaped inputs. With one input the output is
  // bitwise equal to it.
  Var Mean(std::span<const Var> parts);
  // Sum of all entries as a 1×1 node.
  Var SumAll(Var a);
  Var SoftmaxRows(Var a);
  Var Tanh(Var a);
  Var Relu(Var a);
  Var L2NormalizeRows(Var a, double eps = 1e-12);
  Var GatherRows(Var a, std::vector<std::size_t> rows);
  // Row-wise log Σ exp, producing an n×1 column.
  Var LogSumExpRows(Var a);
  Var Transpose(Var a);
  Var Reshape(Var a, std::size_t rows, std::size_t cols);
  // Columns [begin, end).
  Var SliceCols(Var a, std::size_t begin, std::size_t end);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  // Gradient of the last Backward() loss with respect to v.
  const Matrix& grad(Var v) const;
  Op op(Var v) const { return nodes_[v.id].op; }
  std::size_t size() const { return nodes_.size(); }

  // Overwrites a leaf value; call Replay() to refresh downstream values.
  void SetLeafValue(Var leaf, Matrix value);
  // Recomputes every non-leaf node from its inputs in recording order.
  void Replay();

  // Accumulates d(loss)/d(node) for every node. Throws ContractError when the
  // loss node is not 1×1.
  void Backward(Var loss);

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    double scalar = 0.0;
    std::size_t arg0 = 0;
    std::size_t arg1 = 0;
    std::vector<std::size_t> index;
  };

  Var Push(Node node);
  Matrix Compute(const Node& node) const;
  void Propagate(std::size_t id);
  const Matrix& in(const Node& node, std::size_t k) const {
    return nodes_[node.inputs[k]].value;
  }

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  std::vector<bool> touched_;
};

}  // namespace rprobe

#endif  // RPROBE_TAPE_H_
