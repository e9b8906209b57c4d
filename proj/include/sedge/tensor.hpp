// Copyright 2026 The sedge Authors.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sedge {

/// Dense row-major tensor of doubles with explicit extents.
///
/// Every extent is positive and the payload length always equals the
/// product of the extents. Matrices are rank-2 tensors; the row/column
/// helpers assume that rank.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : dims_(std::move(dims)) {
    check_dims(dims_);
    data_.assign(element_count(dims_), fill);
  }

  Tensor(std::vector<std::size_t> dims, std::vector<double> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != element_count(dims_)) {
      throw std::invalid_argument("tensor payload length " +
                                  std::to_string(data_.size()) +
                                  " does not match dims product " +
                                  std::to_string(element_count(dims_)));
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::size_t n, double fill = 0.0) {
    return Tensor({n}, fill);
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return dims_.at(0); }
  std::size_t cols() const { return rank() < 2 ? 1 : dims_.at(1); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t r, std::size_t c) noexcept {
    return data_[r * dims_[1] + c];
  }
  double at(std::size_t r, std::size_t c) const noexcept {
    return data_[r * dims_[1] + c];
  }

  std::span<double> row(std::size_t r) {
    const std::size_t n = cols();
    return std::span<double>(data_).subspan(r * n, n);
  }
  std::span<const double> row(std::size_t r) const {
    const std::size_t n = cols();
    return std::span<const double>(data_).subspan(r * n, n);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& other) const noexcept {
    return dims_ == other.dims_;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  static void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw std::invalid_argument("tensor rank must be >= 1");
    for (std::size_t d : dims) {
      if (d == 0) throw std::invalid_argument("tensor extents must be positive");
    }
  }

  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

inline std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

// out[j] = sum_i x[i] * m[i, j]; m is len(x) x len(out).
inline void vec_mat(std::span<const double> x, const Tensor& m,
                    std::span<double> out) {
  const std::size_t cols = m.cols();
  for (std::size_t j = 0; j < cols; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto r = m.row(i);
    for (std::size_t j = 0; j < cols; ++j) out[j] += xi * r[j];
  }
}

}  // namespace sedge
