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

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedge/nn_math.hpp"
#include "sedge/rng.hpp"
#include "sedge/tensor.hpp"

namespace sedge {

/// Label-space adapter shared by every model pretrained on the same label
/// space: a linear map from R^{c_o} to R^C.
struct AdapterGroup {
  int group_id = 0;
  ParamBlock weight;  // c_o x C
  ParamBlock bias;    // C; held at zero when has_bias is false
  bool has_bias = true;

  std::size_t input_dim() const { return weight.value.rows(); }
  std::size_t output_dim() const { return weight.value.cols(); }
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor fan_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t = Tensor::matrix(fan_in, fan_out);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

inline AdapterGroup init_adapter(int group_id, std::size_t c_o, std::size_t num_classes,
                                 bool has_bias, Rng rng) {
  AdapterGroup g;
  g.group_id = group_id;
  g.has_bias = has_bias;
  const std::string prefix = "adapter_" + std::to_string(group_id);
  g.weight = ParamBlock(prefix + "_W", fan_uniform(c_o, num_classes, rng));
  g.bias = ParamBlock(prefix + "_b", Tensor::vector(num_classes));
  return g;
}

inline void adapt_logits(std::span<const double> z, const AdapterGroup& g, std::span<double> out) {
  if (z.size() != g.input_dim() || out.size() != g.output_dim()) {
    throw std::invalid_argument("adapt_logits: input length " + std::to_string(z.size()) +
                                " / output length " + std::to_string(out.size()) +
                                " do not match adapter " + shape_string(g.weight.value.dims()));
  }
  vec_mat(z, g.weight.value, out);
  if (g.has_bias) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += g.bias.value[j];
  }
}

inline std::vector<double> adapt_logits(std::span<const double> z, const AdapterGroup& g) {
  std::vector<double> out(g.output_dim());
  adapt_logits(z, g, out);
  return out;
}

/// Sample-level specialty p(y | x; theta'_k): the adapted model's softmax
/// likelihood of class y.
inline double model_likelihood(std::span<const double> adapted, std::size_t y) {
  check_class(y, adapted.size());
  return std::exp(-cross_entropy(adapted, y));
}

}  // namespace sedge
