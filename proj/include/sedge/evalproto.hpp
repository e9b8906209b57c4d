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

// Leave-one-domain-out splits and the accuracy metric.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedge/ensemble_net.hpp"
#include "sedge/params.hpp"
#include "sedge/pool.hpp"
#include "sedge/rng.hpp"

namespace sedge {

inline constexpr double kValidationFraction = 0.2;

/// Source domains split 80/20 per domain into train/validation; the target
/// domain is held out entirely as the test set.
struct SplitSpec {
  std::size_t target_domain = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
};

inline std::size_t resolve_domain(const PoolManifest& m, const std::string& name) {
  if (auto idx = m.domain_index(name)) return *idx;
  std::string valid;
  for (const auto& d : m.domains) valid += (valid.empty() ? "" : ", ") + d;
  throw std::out_of_range("unknown domain '" + name + "' (valid: " + valid + ")");
}

inline SplitSpec split_dataset(const PoolCache& pool, std::size_t target_domain,
                               std::uint64_t seed) {
  const std::size_t num_domains = pool.num_domains();
  if (num_domains < 2) throw std::invalid_argument("split_dataset: need at least 2 domains");
  if (target_domain >= num_domains) {
    throw std::out_of_range("split_dataset: unknown domain id " + std::to_string(target_domain));
  }
  std::vector<std::vector<std::size_t>> by_domain(num_domains);
  for (std::size_t i = 0; i < pool.num_samples(); ++i) by_domain[pool.domain_ids[i]].push_back(i);

  SplitSpec s;
  s.target_domain = target_domain;
  s.seed = seed;
  s.test_indices = by_domain[target_domain];
  Rng rng = Rng(seed).split("split");
  for (std::size_t d = 0; d < num_domains; ++d) {
    if (d == target_domain) continue;
    auto idx = by_domain[d];
    Rng dr = rng.split("domain", d);
    dr.shuffle(idx);
    const auto n_val = static_cast<std::size_t>(
        std::floor(kValidationFraction * static_cast<double>(idx.size())));
    s.val_indices.insert(s.val_indices.end(), idx.begin(), idx.begin() + n_val);
    s.train_indices.insert(s.train_indices.end(), idx.begin() + n_val, idx.end());
  }
  std::sort(s.train_indices.begin(), s.train_indices.end());
  std::sort(s.val_indices.begin(), s.val_indices.end());
  return s;
}

/// Class predicted for sample i with top-k dispatch.
inline std::size_t predict_class(const PoolCache& pool, const Params& params, std::size_t i,
                                 std::size_t topk, const Tensor& codes, CombineMode mode) {
  const Tensor adapted = adapted_logits(pool, params, i);
  const auto r = topk_predict(pool.embeddings.row(i), adapted, params.net,
                              std::clamp<std::size_t>(topk, 1, pool.num_models()), codes, mode);
  return argmax(r.y_hat);
}

inline double evaluate(const PoolCache& pool, const Params& params,
                       std::span<const std::size_t> indices, std::size_t topk,
                       CombineMode mode = CombineMode::logits) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty index set");
  const Tensor codes = model_codes(params.net);
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    if (predict_class(pool, params, i, topk, codes, mode) == pool.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace sedge
