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

// Specialty analysis: aggregate log-likelihood per (model, domain|class),
// per-column min-max normalization, KL divergence between the resulting
// per-group distributions over models, and dispatch-weight importance.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedge/adapter.hpp"
#include "sedge/ensemble_net.hpp"
#include "sedge/params.hpp"
#include "sedge/pool.hpp"
#include "sedge/text_io.hpp"

namespace sedge {

enum class SpecialtyLevel { domain, label };

inline std::string to_string(SpecialtyLevel l) {
  return l == SpecialtyLevel::domain ? "domain" : "class";
}

inline SpecialtyLevel specialty_level_from_string(const std::string& s) {
  if (s == "domain") return SpecialtyLevel::domain;
  if (s == "class") return SpecialtyLevel::label;
  throw std::invalid_argument("level must be 'domain' or 'class', got '" + s + "'");
}

/// K x G matrix; G is the number of domains or classes.
struct SpecialtyMatrix {
  Tensor values;
  SpecialtyLevel level = SpecialtyLevel::domain;
  bool normalized = false;

  std::size_t num_models() const { return values.rows(); }
  std::size_t num_groups() const { return values.cols(); }
};

/// Sum over samples of log p(y | x; theta'_k), grouped by domain or class.
inline SpecialtyMatrix aggregate_specialty(const PoolCache& pool, const Params& params,
                                           SpecialtyLevel level) {
  const std::size_t num_models = pool.num_models();
  const std::size_t groups =
      level == SpecialtyLevel::domain ? pool.num_domains() : pool.num_classes();
  SpecialtyMatrix m{Tensor::matrix(num_models, groups), level, false};
  std::vector<std::size_t> counts(groups, 0);
  for (std::size_t i = 0; i < pool.num_samples(); ++i) {
    const std::size_t y = pool.labels[i];
    const std::size_t g = level == SpecialtyLevel::domain ? pool.domain_ids[i] : y;
    ++counts[g];
    const Tensor adapted = adapted_logits(pool, params, i);
    for (std::size_t k = 0; k < num_models; ++k) {
      m.values.at(k, g) += std::log(model_likelihood(adapted.row(k), y));
    }
  }
  for (std::size_t g = 0; g < groups; ++g) {
    if (counts[g] == 0) {
      throw std::invalid_argument("aggregate_specialty: " + to_string(level) + " " +
                                  std::to_string(g) + " has no samples");
    }
  }
  return m;
}

/// Per column: (v - min) / (max - min); a constant column becomes all zeros.
inline SpecialtyMatrix minmax_normalize(const SpecialtyMatrix& m) {
  SpecialtyMatrix out = m;
  out.normalized = true;
  for (std::size_t g = 0; g < m.num_groups(); ++g) {
    double lo = m.values.at(0, g);
    double hi = lo;
    for (std::size_t k = 1; k < m.num_models(); ++k) {
      lo = std::min(lo, m.values.at(k, g));
      hi = std::max(hi, m.values.at(k, g));
    }
    for (std::size_t k = 0; k < m.num_models(); ++k) {
      out.values.at(k, g) = hi > lo ? (m.values.at(k, g) - lo) / (hi - lo) : 0.0;
    }
  }
  return out;
}

inline constexpr double kKlSmoothing = 1e-6;

/// Column g of a normalized matrix as a distribution over models.
inline std::vector<double> column_distribution(const SpecialtyMatrix& m, std::size_t g) {
  std::vector<double> q(m.num_models());
  double sum = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    q[k] = m.values.at(k, g) + kKlSmoothing;
    sum += q[k];
  }
  for (double& v : q) v /= sum;
  return q;
}

/// G x G matrix with entry (a, b) = KL(q_a || q_b).
inline Tensor kl_matrix(const SpecialtyMatrix& m) {
  if (!m.normalized) throw std::invalid_argument("kl_matrix: matrix must be min-max normalized");
  const std::size_t groups = m.num_groups();
  std::vector<std::vector<double>> q(groups);
  for (std::size_t g = 0; g < groups; ++g) q[g] = column_distribution(m, g);
  Tensor kl = Tensor::matrix(groups, groups);
  for (std::size_t a = 0; a < groups; ++a) {
    for (std::size_t b = 0; b < groups; ++b) {
      if (a == b) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < q[a].size(); ++k) d += q[a][k] * std::log(q[a][k] / q[b][k]);
      kl.at(a, b) = d;
    }
  }
  return kl;
}

inline double mean_off_diagonal(const Tensor& square) {
  const std::size_t n = square.rows();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b) s += square.at(a, b);
    }
  }
  return s / static_cast<double>(n * (n - 1));
}

struct ImportanceEntry {
  std::size_t model = 0;
  double weight_sum = 0.0;
  std::size_t rank = 0;  // 1 = most important
};

/// Sums each model's full (pre-top-k) dispatch weight over `indices`.
/// Returned in rank order; ties go to the lower model id.
inline std::vector<ImportanceEntry> model_importance(const Params& params, const PoolCache& pool,
                                                     std::span<const std::size_t> indices) {
  const std::size_t num_models = pool.num_models();
  std::vector<double> sums(num_models, 0.0);
  const Tensor codes = model_codes(params.net);
  for (std::size_t i : indices) {
    const auto w =
        ensemble_weights(matching_scores(pool.embeddings.row(i), params.net, codes), params.net);
    for (std::size_t k = 0; k < num_models; ++k) sums[k] += w[k];
  }
  std::vector<std::size_t> order(num_models);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sums[a] > sums[b]; });
  std::vector<ImportanceEntry> out;
  for (std::size_t r = 0; r < order.size(); ++r) out.push_back({order[r], sums[order[r]], r + 1});
  return out;
}

inline std::vector<std::size_t> ranking(const std::vector<ImportanceEntry>& entries) {
  std::vector<std::size_t> ids;
  for (const auto& e : entries) ids.push_back(e.model);
  return ids;
}

inline std::vector<std::string> group_names(const PoolManifest& manifest, SpecialtyLevel level) {
  if (level == SpecialtyLevel::domain) return manifest.domains;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < manifest.num_classes; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

inline std::string specialty_csv(const SpecialtyMatrix& m, const PoolManifest& manifest) {
  std::vector<std::string> header = {"model"};
  for (const auto& g : group_names(manifest, m.level)) header.push_back(g);
  std::string out = csv_line(header);
  for (std::size_t k = 0; k < m.num_models(); ++k) {
    std::vector<std::string> row = {manifest.models[k].name};
    for (std::size_t g = 0; g < m.num_groups(); ++g) row.push_back(format_double(m.values.at(k, g)));
    out += csv_line(row);
  }
  return out;
}

inline std::string kl_csv(const Tensor& kl, const PoolManifest& manifest, SpecialtyLevel level) {
  const auto names = group_names(manifest, level);
  std::vector<std::string> header = {"group"};
  header.insert(header.end(), names.begin(), names.end());
  std::string out = csv_line(header);
  for (std::size_t a = 0; a < kl.rows(); ++a) {
    std::vector<std::string> row = {names[a]};
    for (std::size_t b = 0; b < kl.cols(); ++b) row.push_back(format_double(kl.at(a, b)));
    out += csv_line(row);
  }
  return out;
}

inline std::string importance_csv(const std::vector<ImportanceEntry>& entries,
                                  const PoolManifest& manifest) {
  std::string out = csv_line({"model", "sum", "rank"});
  for (const auto& e : entries) {
    out += csv_line(
        {manifest.models[e.model].name, format_double(e.weight_sum), std::to_string(e.rank)});
  }
  return out;
}

}  // namespace sedge
