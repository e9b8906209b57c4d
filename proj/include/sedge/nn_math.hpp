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

// Numeric kernels used by the dispatcher and its losses, with their analytic
// derivatives, plus Adam and a central-difference gradient checker.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedge/tensor.hpp"

namespace sedge {

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

// Subgradient at 0 is 0.
inline double relu_grad(double x) noexcept { return x > 0.0 ? 1.0 : 0.0; }

inline Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = relu(v);
  return out;
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) noexcept {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double softplus_grad(double x) noexcept { return sigmoid(x); }

inline Tensor softplus(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = softplus(v);
  return out;
}

namespace detail {
// log(sum exp(z - max z)) as log1p over the non-maximal terms.
inline double log_sum_exp_tail(std::span<const double> z, double& max_out) {
  const auto top = std::max_element(z.begin(), z.end());
  max_out = *top;
  double rest = 0.0;
  for (auto it = z.begin(); it != z.end(); ++it) {
    if (it != top) rest += std::exp(*it - max_out);
  }
  return std::log1p(rest);
}
}  // namespace detail

inline double log_sum_exp(std::span<const double> z) {
  double m = 0.0;
  const double tail = detail::log_sum_exp_tail(z, m);
  return m + tail;
}

inline void softmax(std::span<const double> z, std::span<double> out) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.size());
  softmax(z, out);
  return out;
}

inline void check_class(std::size_t y, std::size_t num_classes) {
  if (y >= num_classes) {
    throw std::out_of_range("class index " + std::to_string(y) + " out of range for C=" +
                            std::to_string(num_classes));
  }
}

/// -log softmax(logits)[y] via log-sum-exp.
inline double cross_entropy(std::span<const double> logits, std::size_t y) {
  check_class(y, logits.size());
  double m = 0.0;
  const double tail = detail::log_sum_exp_tail(logits, m);
  return (m - logits[y]) + tail;
}

// d CE / d logits = softmax(logits) - onehot(y).
inline std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t y) {
  check_class(y, logits.size());
  auto g = softmax(logits);
  g[y] -= 1.0;
  return g;
}

/// A trainable tensor together with its gradient accumulator and Adam moments.
struct ParamBlock {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::size_t step_count = 0;

  ParamBlock() = default;
  ParamBlock(std::string n, Tensor v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.dims()),
        adam_m(value.dims()),
        adam_v(value.dims()) {}

  void zero_grad() { grad.fill(0.0); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update; the gradient is zeroed afterwards.
inline void adam_step(ParamBlock& p, const AdamConfig& cfg) {
  ++p.step_count;
  const double t = static_cast<double>(p.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  auto value = p.value.data();
  auto grad = p.grad.data();
  auto m = p.adam_m.data();
  auto v = p.adam_v.data();
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    grad[i] = 0.0;
  }
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares the analytic gradients already stored in `blocks[*]->grad` with
/// central differences of `loss`. Entries for which `skip(block, index)`
/// returns true (non-differentiable points) are not checked. Values are
/// restored exactly after each probe.
inline GradCheckResult grad_check(
    const std::function<double()>& loss, std::span<ParamBlock* const> blocks, double eps = 1e-5,
    const std::function<bool(std::size_t, std::size_t)>& skip = {}) {
  GradCheckResult r;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    ParamBlock& p = *blocks[b];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (skip && skip(b, i)) {
        ++r.skipped;
        continue;
      }
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = loss();
      p.value[i] = saved - eps;
      const double down = loss();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(p.grad[i], numeric);
      ++r.checked;
      if (r.checked == 1 || err > r.max_relative_error) {
        r.max_relative_error = err;
        r.worst_block = p.name;
        r.worst_index = i;
        r.worst_analytic = p.grad[i];
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace sedge
