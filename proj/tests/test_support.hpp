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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sedge/synth_bench.hpp"
#include "sedge/tensor.hpp"

namespace sedge::testing {

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sedge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// A few-sample pool with K models, C classes and small dimensions.
inline GenConfig mini_config(std::uint64_t seed, std::size_t num_models = 3,
                             std::size_t num_classes = 4, std::size_t n_per_domain = 8) {
  GenConfig g;
  g.seed = seed;
  g.num_source_domains = 2;
  g.num_target_domains = 1;
  g.num_classes = num_classes;
  g.num_models = num_models;
  g.n_per_domain = n_per_domain;
  g.d_q = 6;
  g.latent_dim = 2;
  g.group_label_dims = {num_classes + 2, num_classes + 1};
  g.model_groups.clear();
  for (std::size_t k = 0; k < num_models; ++k) g.model_groups.push_back(k % 2);
  return g;
}

// Test-side reference: out = x * m with plain loops.
inline std::vector<double> naive_vec_mat(const std::vector<double>& x, const Tensor& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * m.at(i, j);
  }
  return out;
}

inline Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& gen,
                            double scale = 1.0) {
  Tensor t(std::move(dims));
  std::normal_distribution<double> dist(0.0, scale);
  for (double& v : t.data()) v = dist(gen);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& gen, double scale = 1.0) {
  std::vector<double> v(n);
  std::normal_distribution<double> dist(0.0, scale);
  for (double& x : v) x = dist(gen);
  return v;
}

}  // namespace sedge::testing
