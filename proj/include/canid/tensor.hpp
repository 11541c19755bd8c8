// Copyright (c) 2026 The canid authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CANID_TENSOR_HPP_
#define CANID_TENSOR_HPP_

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace canid {

// Dense real array with a same-shape gradient buffer; the unit of backprop.
// 2-D tensors are row-major {rows, cols}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) { reshape(std::move(shape)); }

  void reshape(std::vector<int> shape) {
    shape_ = std::move(shape);
    size_t n = 1;
    for (int d : shape_) n *= static_cast<size_t>(d);
    v_.assign(n, 0.0);
    g_.assign(n, 0.0);
    cols_ = shape_.size() >= 2 ? shape_.back() : (shape_.empty() ? 0 : shape_[0]);
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t size() const { return v_.size(); }

  double* v() { return v_.data(); }
  const double* v() const { return v_.data(); }
  double* g() { return g_.data(); }
  const double* g() const { return g_.data(); }

  void zero_grad() { std::fill(g_.begin(), g_.end(), 0.0); }
  void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

  // Row access for {rows, cols} tensors; a 1-D tensor is a single row.
  int rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  int cols() const { return cols_; }
  double* row(int r) { return v_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return v_.data() + static_cast<size_t>(r) * cols_; }
  double* grow(int r) { return g_.data() + static_cast<size_t>(r) * cols_; }
  const double* grow(int r) const { return g_.data() + static_cast<size_t>(r) * cols_; }

 private:
  std::vector<int> shape_;
  std::vector<double> v_, g_;
  int cols_ = 0;
};

struct Parameter {
  std::string name;
  Tensor t;
  bool trainable = true;
};

}  // namespace canid

#endif  // CANID_TENSOR_HPP_
