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

#ifndef RPROBE_MATRIX_H_
#define RPROBE_MATRIX_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rprobe {

// Dense row-major matrix of doubles. Vectors are represented as 1×n or n×1
// matrices where a shape matters, and as std::vector<double> otherwise.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  // Nested-list literal, e.g. Matrix({{1, 2}, {3, 4}}).
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix Identity(std::size_t n);
  static Matrix RowVector(std::span<const double> v);
  static Matrix ColVector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool SameShape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool AllFinite() const;
  void Fill(double value);

  // "3x4"-style shape label for error messages.
  std::string ShapeString() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a · b. Throws ShapeError when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
// a · bᵀ and aᵀ · b without materializing the transpose.
Matrix matmul_transposed_b(const Matrix& a, const Matrix& b);
Matrix matmul_transposed_a(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Numerically stable softmax. Throws DomainError on empty input.
std::vector<double> softmax(std::span<const double> v);
// log Σ exp(v_i), stable. Throws DomainError on empty input.
double logsumexp(std::span<const double> v);

// v / ‖v‖ when ‖v‖ > eps, zero vector otherwise.
std::vector<double> l2_normalize(std::span<const double> v, double eps = 1e-12);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

// Max |a-b| over all entries; throws ShapeError on mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace rprobe

#endif  // RPROBE_MATRIX_H_
