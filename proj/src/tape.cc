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

#include "rprobe/tape.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "rprobe/errors.h"

namespace rprobe {
namespace {

void RequireSameShape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.SameShape(b)) {
    throw ShapeError(std::string(op) + ": shape " + a.ShapeString() +
                     " vs " + b.ShapeString());
  }
}

void AddInto(Matrix& dst, const Matrix& src) {
  auto& d = dst.data();
  const auto& s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void AddScaledInto(Matrix& dst, const Matrix& src, double scale) {
  auto& d = dst.data();
  const auto& s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

}  // namespace

Var Tape::Push(Node node) {
  node.value = Compute(node);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::Leaf(Matrix value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::MatMul(Var a, Var b) {
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a.id, b.id};
  return Push(std::move(n));
}

Var Tape::Add(Var a, Var b) {
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a.id, b.id};
  return Push(std::move(n));
}

Var Tape::Sub(Var a, Var b) {
  Node n;
  n.op = Op::kSub;
  n.inputs = {a.id, b.id};
  return Push(std::move(n));
}

Var Tape::AddRowBroadcast(Var a, Var b) {
  Node n;
  n.op = Op::kAddRowBroadcast;
  n.inputs = {a.id, b.id};
  return Push(std::move(n));
}

Var Tape::Mul(Var a, Var b) {
  Node n;
  n.op = Op::kMul;
  n.inputs = {a.id, b.id};
  return Push(std::move(n));
}

Var Tape::MulColBroadcast(Var a, Var c) {
  Node n;
  n.op = Op::kMulColBroadcast;
  n.inputs = {a.id, c.id};
  return Push(std::move(n));
}

Var Tape::Scale(Var a, double s) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {a.id};
  n.scalar = s;
  return Push(std::move(n));
}

Var Tape::ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("ConcatCols: no inputs");
  Node n;
  n.op = Op::kConcatCols;
  for (Var v : parts) n.inputs.push_back(v.id);
  return Push(std::move(n));
}

Var Tape::ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("ConcatRows: no inputs");
  Node n;
  n.op = Op::kConcatRows;
  for (Var v : parts) n.inputs.push_back(v.id);
  return Push(std::move(n));
}

Var Tape::Mean(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("Mean: no inputs");
  Node n;
  n.op = Op::kMean;
  for (Var v : parts) n.inputs.push_back(v.id);
  return Push(std::move(n));
}

Var Tape::SumAll(Var a) {
  Node n;
  n.op = Op::kSumAll;
  n.inputs = {a.id};
  return Push(std::move(n));
}

Var Tape::SoftmaxRows(Var a) {
  Node n;
  n.op = Op::kSoftmaxRows;
  n.inputs = {a.id};
  return Push(std::move(n));
}

Var Tape::Tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.inputs = {a.id};
  return Push(std::move(n));
}

Var Tape::Relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.inputs = {a.id};
  return Push(std::move(n));
}

Var Tape::L2NormalizeRows(Var a, double eps) {
  Node n;
  n.op = Op::kL2NormalizeRows;
  n.inputs = {a.id};
  n.scalar = eps;
  return Push(std::move(n));
}

Var Tape::GatherRows(Var a, std::vector<std::size_t> rows) {
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {a.id};
  n.index = std::move(rows);
  return Push(std::move(n));
}

Var Tape::LogSumExpRows(Var a) {
  Node n;
  n.op = Op::kLogSumExpRows;
  n.inputs = {a.id};
  return Push(std::move(n));
}

Var Tape::Transpose(Var a) {
  Node n;
  n.op = Op::kTranspose;
  n.inputs = {a.id};
  return Push(std::move(n));
}

Var Tape::Reshape(Var a, std::size_t rows, std::size_t cols) {
  Node n;
  n.op = Op::kReshape;
  n.inputs = {a.id};
  n.arg0 = rows;
  n.arg1 = cols;
  return Push(std::move(n));
}

Var Tape::SliceCols(Var a, std::size_t begin, std::size_t end) {
  Node n;
  n.op = Op::kSliceCols;
  n.inputs = {a.id};
  n.arg0 = begin;
  n.arg1 = end;
  return Push(std::move(n));
}

Matrix Tape::Compute(const Node& node) const {
  switch (node.op) {
    case Op::kLeaf:
      return node.value;
    case Op::kMatMul:
      return matmul(in(node, 0), in(node, 1));
    case Op::kAdd:
    case Op::kSub: {
      const Matrix& a = in(node, 0);
      const Matrix& b = in(node, 1);
      RequireSameShape(node.op == Op::kAdd ? "Add" : "Sub", a, b);
      Matrix out = a;
      const double sign = node.op == Op::kAdd ? 1.0 : -1.0;
      for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] += sign * b.data()[i];
      return out;
    }
    case Op::kAddRowBroadcast: {
      const Matrix& a = in(node, 0);
      const Matrix& b = in(node, 1);
      if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("AddRowBroadcast: shape " + a.ShapeString() +
                         " with row " + b.ShapeString());
      }
      Matrix out = a;
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += b(0, c);
      }
      return out;
    }
    case Op::kMul: {
      const Matrix& a = in(node, 0);
      const Matrix& b = in(node, 1);
      RequireSameShape("Mul", a, b);
      Matrix out = a;
      for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] *= b.data()[i];
      return out;
    }
    case Op::kMulColBroadcast: {
      const Matrix& a = in(node, 0);
      const Matrix& c = in(node, 1);
      if (c.cols() != 1 || c.rows() != a.rows()) {
        throw ShapeError("MulColBroadcast: shape " + a.ShapeString() +
                         " with column " + c.ShapeString());
      }
      Matrix out = a;
      for (std::size_t r = 0; r < out.rows(); ++r)
        for (double& x : out.row(r)) x *= c(r, 0);
      return out;
    }
    case Op::kScale: {
      Matrix out = in(node, 0);
      for (double& x : out.data()) x *= node.scalar;
      return out;
    }
    case Op::kConcatCols: {
      const std::size_t rows = in(node, 0).rows();
      std::size_t cols = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (in(node, k).rows() != rows) {
          throw ShapeError("ConcatCols: row count " +
                           in(node, 0).ShapeString() + " vs " +
                           in(node, k).ShapeString());
        }
        cols += in(node, k).cols();
      }
      Matrix out(rows, cols);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Matrix& p = in(node, k);
        for (std::size_t r = 0; r < rows; ++r)
          std::copy(p.row(r).begin(), p.row(r).end(),
                    out.row(r).begin() + offset);
        offset += p.cols();
      }
      return out;
    }
    case Op::kConcatRows: {
      const std::size_t cols = in(node, 0).cols();
      std::vector<double> data;
      std::size_t rows = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Matrix& p = in(node, k);
        if (p.cols() != cols) {
          throw ShapeError("ConcatRows: column count " +
                           in(node, 0).ShapeString() + " vs " +
                           p.ShapeString());
        }
        data.insert(data.end(), p.data().begin(), p.data().end());
        rows += p.rows();
      }
      return Matrix(rows, cols, std::move(data));
    }
    case Op::kMean: {
      Matrix out = in(node, 0);
      for (std::size_t k = 1; k < node.inputs.size(); ++k) {
        RequireSameShape("Mean", out, in(node, k));
        AddInto(out, in(node, k));
      }
      const double inv = 1.0 / static_cast<double>(node.inputs.size());
      for (double& x : out.data()) x *= inv;
      return out;
    }
    case Op::kSumAll: {
      double s = 0.0;
      for (double x : in(node, 0).data()) s += x;
      return Matrix(1, 1, s);
    }
    case Op::kSoftmaxRows: {
      const Matrix& a = in(node, 0);
      if (a.cols() == 0) throw DomainError("SoftmaxRows: empty rows");
      Matrix out(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto s = softmax(a.row(r));
        std::copy(s.begin(), s.end(), out.row(r).begin());
      }
      return out;
    }
    case Op::kTanh: {
      Matrix out = in(node, 0);
      for (double& x : out.data()) x = std::tanh(x);
      return out;
    }
    case Op::kRelu: {
      Matrix out = in(node, 0);
      for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
      return out;
    }
    case Op::kL2NormalizeRows: {
      const Matrix& a = in(node, 0);
      Matrix out(a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto s = l2_normalize(a.row(r), node.scalar);
        std::copy(s.begin(), s.end(), out.row(r).begin());
      }
      return out;
    }
    case Op::kGatherRows: {
      const Matrix& a = in(node, 0);
      Matrix out(node.index.size(), a.cols());
      for (std::size_t r = 0; r < node.index.size(); ++r) {
        if (node.index[r] >= a.rows()) {
          throw LookupError("GatherRows: row " +
                            std::to_string(node.index[r]) + " of " +
                            a.ShapeString());
        }
        auto src = a.row(node.index[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
      }
      return out;
    }
    case Op::kLogSumExpRows: {
      const Matrix& a = in(node, 0);
      if (a.cols() == 0) throw DomainError("LogSumExpRows: empty rows");
      Matrix out(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) out(r, 0) = logsumexp(a.row(r));
      return out;
    }
    case Op::kTranspose:
      return transpose(in(node, 0));
    case Op::kReshape: {
      const Matrix& a = in(node, 0);
      if (node.arg0 * node.arg1 != a.size()) {
        throw ShapeError("Reshape: " + a.ShapeString() + " to " +
                         std::to_string(node.arg0) + "x" +
                         std::to_string(node.arg1));
      }
      return Matrix(node.arg0, node.arg1, a.data());
    }
    case Op::kSliceCols: {
      const Matrix& a = in(node, 0);
      if (node.arg0 > node.arg1 || node.arg1 > a.cols()) {
        throw ShapeError("SliceCols: [" + std::to_string(node.arg0) + "," +
                         std::to_string(node.arg1) + ") of " +
                         a.ShapeString());
      }
      Matrix out(a.rows(), node.arg1 - node.arg0);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = node.arg0; c < node.arg1; ++c)
          out(r, c - node.arg0) = a(r, c);
      return out;
    }
  }
  throw ContractError("unknown tape op");
}

const Matrix& Tape::grad(Var v) const {
  if (v.id >= grads_.size()) {
    throw ContractError("gradient requested before Backward()");
  }
  return grads_[v.id];
}

void Tape::SetLeafValue(Var leaf, Matrix value) {
  Node& n = nodes_.at(leaf.id);
  if (n.op != Op::kLeaf) throw ContractError("SetLeafValue on a non-leaf");
  if (!n.value.SameShape(value)) {
    throw ShapeError("SetLeafValue: " + n.value.ShapeString() + " vs " +
                     value.ShapeString());
  }
  n.value = std::move(value);
}

void Tape::Replay() {
  for (Node& n : nodes_) {
    if (n.op != Op::kLeaf) n.value = Compute(n);
  }
}

void Tape::Backward(Var loss) {
  const Matrix& lv = nodes_.at(loss.id).value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("Backward: loss must be 1x1, got " + lv.ShapeString());
  }
  grads_.assign(nodes_.size(), Matrix());
  touched_.assign(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    grads_[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
  grads_[loss.id](0, 0) = 1.0;
  touched_[loss.id] = true;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (touched_[id]) Propagate(id);
  }
}

void Tape::Propagate(std::size_t id) {
  const Node& node = nodes_[id];
  const Matrix& g = grads_[id];
  auto target = [&](std::size_t k) -> Matrix& {
    touched_[node.inputs[k]] = true;
    return grads_[node.inputs[k]];
  };
  switch (node.op) {
    case Op::kLeaf:
      return;
    case Op::kMatMul: {
      const Matrix& a = in(node, 0);
      const Matrix& b = in(node, 1);
      AddInto(target(0), matmul_transposed_b(g, b));
      AddInto(target(1), matmul_transposed_a(a, g));
      return;
    }
    case Op::kAdd:
      AddInto(target(0), g);
      AddInto(target(1), g);
      return;
    case Op::kSub:
      AddInto(target(0), g);
      AddScaledInto(target(1), g, -1.0);
      return;
    case Op::kAddRowBroadcast: {
      AddInto(target(0), g);
      Matrix& gb = target(1);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      return;
    }
    case Op::kMul: {
      const Matrix& a = in(node, 0);
      const Matrix& b = in(node, 1);
      Matrix& ga = target(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga.data()[i] += g.data()[i] * b.data()[i];
      Matrix& gb = target(1);
      for (std::size_t i = 0; i < g.size(); ++i)
        gb.data()[i] += g.data()[i] * a.data()[i];
      return;
    }
    case Op::kMulColBroadcast: {
      const Matrix& a = in(node, 0);
      const Matrix& c = in(node, 1);
      Matrix& ga = target(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += g(r, j) * c(r, 0);
      Matrix& gc = target(1);
      for (std::size_t r = 0; r < g.rows(); ++r) gc(r, 0) += dot(g.row(r), a.row(r));
      return;
    }
    case Op::kScale:
      AddScaledInto(target(0), g, node.scalar);
      return;
    case Op::kConcatCols: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        Matrix& gk = target(k);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < gk.cols(); ++c)
            gk(r, c) += g(r, offset + c);
        offset += gk.cols();
      }
      return;
    }
    case Op::kConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        Matrix& gk = target(k);
        for (std::size_t i = 0; i < gk.size(); ++i)
          gk.data()[i] += g.data()[offset + i];
        offset += gk.size();
      }
      return;
    }
    case Op::kMean: {
      const double inv = 1.0 / static_cast<double>(node.inputs.size());
      for (std::size_t k = 0; k < node.inputs.size(); ++k)
        AddScaledInto(target(k), g, inv);
      return;
    }
    case Op::kSumAll: {
      Matrix& ga = target(0);
      for (double& x : ga.data()) x += g(0, 0);
      return;
    }
    case Op::kSoftmaxRows: {
      const Matrix& y = node.value;
      Matrix& ga = target(0);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double gy = dot(g.row(r), y.row(r));
        for (std::size_t c = 0; c < y.cols(); ++c)
          ga(r, c) += y(r, c) * (g(r, c) - gy);
      }
      return;
    }
    case Op::kTanh: {
      const Matrix& y = node.value;
      Matrix& ga = target(0);
      for (std::size_t i = 0; i < y.size(); ++i)
        ga.data()[i] += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
      return;
    }
    case Op::kRelu: {
      const Matrix& a = in(node, 0);
      Matrix& ga = target(0);
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] > 0.0) ga.data()[i] += g.data()[i];
      return;
    }
    case Op::kL2NormalizeRows: {
      const Matrix& a = in(node, 0);
      const Matrix& y = node.value;
      Matrix& ga = target(0);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double n = norm2(a.row(r));
        if (n <= node.scalar) continue;
        const double gy = dot(g.row(r), y.row(r));
        for (std::size_t c = 0; c < a.cols(); ++c)
          ga(r, c) += (g(r, c) - y(r, c) * gy) / n;
      }
      return;
    }
    case Op::kGatherRows: {
      Matrix& ga = target(0);
      for (std::size_t r = 0; r < node.index.size(); ++r) {
        auto dst = ga.row(node.index[r]);
        auto src = g.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
      return;
    }
    case Op::kLogSumExpRows: {
      const Matrix& a = in(node, 0);
      Matrix& ga = target(0);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double lse = node.value(r, 0);
        for (std::size_t c = 0; c < a.cols(); ++c)
          ga(r, c) += g(r, 0) * std::exp(a(r, c) - lse);
      }
      return;
    }
    case Op::kTranspose: {
      Matrix& ga = target(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
      return;
    }
    case Op::kReshape: {
      Matrix& ga = target(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
      return;
    }
    case Op::kSliceCols: {
      Matrix& ga = target(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, node.arg0 + c) += g(r, c);
      return;
    }
  }
}

}  // namespace rprobe
