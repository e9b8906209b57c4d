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

// Synthetic pools with planted per-(model, domain, class) specialty, a Monte
// Carlo accuracy oracle for them, and the ablation baselines.
//
// For a sample of class y in domain d, model k emits
//
//   z_k = beta * A_k[d,y] * onehot(m(y))
//       + rho * beta * (1 - A_k[d,y]) * onehot(m(y'_i))
//       + N(0, sigma_z^2 I)
//
// with A_k[d,c] = sigmoid(gamma * (s_d a_k.v_d + s_c b_k.u_c - offset)),
// m the group's class map into its label space and y'_i != y a confusable
// class drawn per sample and shared by every model, so non-specialists err
// together and no fixed relabeling can undo the confusion.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sedge/evalproto.hpp"
#include "sedge/nn_math.hpp"
#include "sedge/params.hpp"
#include "sedge/pool.hpp"
#include "sedge/rng.hpp"
#include "sedge/training.hpp"

namespace sedge {

struct GenConfig {
  std::size_t num_source_domains = 3;
  std::size_t num_target_domains = 1;
  std::size_t num_classes = 10;
  std::size_t num_models = 8;
  std::size_t n_per_domain = 500;
  std::size_t d_q = 32;
  std::size_t latent_dim = 3;
  std::vector<std::size_t> group_label_dims = {20, 12};
  std::vector<std::size_t> model_groups = {0, 0, 0, 0, 1, 1, 1, 1};
  double signal = 4.0;          // beta
  double logit_noise = 1.0;     // sigma_z
  double embed_noise = 0.1;     // sigma_e
  double sharpness = 3.0;       // gamma
  double domain_scale = 0.6;
  double class_scale = 1.0;
  double specialty_offset = 0.4;
  double confuser_mass = 1.0;   // rho; 0 leaves pure noise off the true class
  // Per-model fixed specialty in [0, 1]; negative entries use the planted value.
  std::vector<double> specialty_override;
  std::uint64_t seed = 0;

  std::size_t num_domains() const { return num_source_domains + num_target_domains; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw std::invalid_argument(std::string("gen config.") + name + ": must be > 0");
    };
    positive(num_source_domains, "num_source_domains");
    positive(num_target_domains, "num_target_domains");
    positive(num_models, "num_models");
    positive(n_per_domain, "n_per_domain");
    positive(d_q, "d_q");
    positive(latent_dim, "latent_dim");
    if (num_classes < 2) throw std::invalid_argument("gen config.num_classes: must be >= 2");
    if (group_label_dims.empty()) throw std::invalid_argument("gen config.group_label_dims: empty");
    for (std::size_t c_o : group_label_dims) {
      if (c_o < num_classes) {
        throw std::invalid_argument("gen config.group_label_dims: c_o " + std::to_string(c_o) +
                                    " < num_classes " + std::to_string(num_classes) +
                                    " (class map must be injective)");
      }
    }
    if (model_groups.size() != num_models) {
      throw std::invalid_argument("gen config.model_groups: length " +
                                  std::to_string(model_groups.size()) + " != num_models " +
                                  std::to_string(num_models));
    }
    for (std::size_t g : model_groups) {
      if (g >= group_label_dims.size()) {
        throw std::invalid_argument("gen config.model_groups: unknown group " + std::to_string(g));
      }
    }
    if (!specialty_override.empty() && specialty_override.size() != num_models) {
      throw std::invalid_argument("gen config.specialty_override: length must equal num_models");
    }
    for (double a : specialty_override) {
      if (a > 1.0) throw std::invalid_argument("gen config.specialty_override: values must be <= 1");
    }
    if (signal < 0 || logit_noise < 0 || embed_noise < 0 || sharpness < 0 || confuser_mass < 0 ||
        confuser_mass > 1) {
      throw std::invalid_argument("gen config: negative scale or confuser_mass outside [0, 1]");
    }
  }
};

inline nlohmann::ordered_json to_json(const GenConfig& g) {
  return {{"num_source_domains", g.num_source_domains},
          {"num_target_domains", g.num_target_domains},
          {"num_classes", g.num_classes},
          {"num_models", g.num_models},
          {"n_per_domain", g.n_per_domain},
          {"d_q", g.d_q},
          {"latent_dim", g.latent_dim},
          {"group_label_dims", g.group_label_dims},
          {"model_groups", g.model_groups},
          {"signal", g.signal},
          {"logit_noise", g.logit_noise},
          {"embed_noise", g.embed_noise},
          {"sharpness", g.sharpness},
          {"domain_scale", g.domain_scale},
          {"class_scale", g.class_scale},
          {"specialty_offset", g.specialty_offset},
          {"confuser_mass", g.confuser_mass},
          {"specialty_override", g.specialty_override},
          {"seed", g.seed}};
}

inline GenConfig gen_config_from_json(const nlohmann::json& j, GenConfig c = {}) {
  if (!j.is_object()) throw std::invalid_argument("gen config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "num_source_domains") c.num_source_domains = v.get<std::size_t>();
      else if (key == "num_target_domains") c.num_target_domains = v.get<std::size_t>();
      else if (key == "num_classes") c.num_classes = v.get<std::size_t>();
      else if (key == "num_models") c.num_models = v.get<std::size_t>();
      else if (key == "n_per_domain") c.n_per_domain = v.get<std::size_t>();
      else if (key == "d_q") c.d_q = v.get<std::size_t>();
      else if (key == "latent_dim") c.latent_dim = v.get<std::size_t>();
      else if (key == "group_label_dims") c.group_label_dims = v.get<std::vector<std::size_t>>();
      else if (key == "model_groups") c.model_groups = v.get<std::vector<std::size_t>>();
      else if (key == "signal") c.signal = v.get<double>();
      else if (key == "logit_noise") c.logit_noise = v.get<double>();
      else if (key == "embed_noise") c.embed_noise = v.get<double>();
      else if (key == "sharpness") c.sharpness = v.get<double>();
      else if (key == "domain_scale") c.domain_scale = v.get<double>();
      else if (key == "class_scale") c.class_scale = v.get<double>();
      else if (key == "specialty_offset") c.specialty_offset = v.get<double>();
      else if (key == "confuser_mass") c.confuser_mass = v.get<double>();
      else if (key == "specialty_override") c.specialty_override = v.get<std::vector<double>>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw std::invalid_argument("gen config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("gen config: ") + e.what());
  }
  return c;
}

/// The hidden structure a GenConfig plants.
struct PlantedWorld {
  std::vector<std::vector<double>> class_latent;   // u_c
  std::vector<std::vector<double>> domain_latent;  // v_d
  std::vector<std::vector<double>> model_domain;   // a_k
  std::vector<std::vector<double>> model_class;    // b_k
  Tensor projection;                               // 2r x d_q
  std::vector<std::vector<std::size_t>> class_map; // per group: class -> label-space index
  std::vector<double> specialty;                   // K x D x C

  double specialty_at(std::size_t k, std::size_t d, std::size_t c) const {
    const std::size_t num_domains = domain_latent.size();
    const std::size_t num_classes = class_latent.size();
    return specialty[(k * num_domains + d) * num_classes + c];
  }
};

namespace detail {

inline std::vector<double> unit_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

inline PlantedWorld plant(const GenConfig& g) {
  g.validate();
  const Rng root(g.seed);
  PlantedWorld w;
  const std::size_t r = g.latent_dim;
  const std::size_t num_domains = g.num_domains();

  Rng lat = root.split("latents");
  for (std::size_t c = 0; c < g.num_classes; ++c) w.class_latent.push_back(detail::unit_vector(r, lat));
  for (std::size_t d = 0; d < num_domains; ++d) w.domain_latent.push_back(detail::unit_vector(r, lat));
  for (std::size_t k = 0; k < g.num_models; ++k) {
    w.model_domain.push_back(detail::unit_vector(r, lat));
    w.model_class.push_back(detail::unit_vector(r, lat));
  }

  // Unit-variance embedding coordinates for the unit-norm concatenated latent.
  Rng proj = root.split("projection");
  w.projection = Tensor::matrix(2 * r, g.d_q);
  for (double& v : w.projection.data()) v = proj.normal(0.0, std::sqrt(0.5));

  Rng maps = root.split("class_map");
  for (std::size_t c_o : g.group_label_dims) {
    std::vector<std::size_t> slots(c_o);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    maps.shuffle(slots);
    slots.resize(g.num_classes);
    w.class_map.push_back(std::move(slots));
  }

  w.specialty.resize(g.num_models * num_domains * g.num_classes);
  for (std::size_t k = 0; k < g.num_models; ++k) {
    for (std::size_t d = 0; d < num_domains; ++d) {
      for (std::size_t c = 0; c < g.num_classes; ++c) {
        double a;
        if (!g.specialty_override.empty() && g.specialty_override[k] >= 0.0) {
          a = g.specialty_override[k];
        } else {
          const double x = g.domain_scale * detail::dot(w.model_domain[k], w.domain_latent[d]) +
                           g.class_scale * detail::dot(w.model_class[k], w.class_latent[c]) -
                           g.specialty_offset;
          a = sigmoid(g.sharpness * x);
        }
        w.specialty[(k * num_domains + d) * g.num_classes + c] = a;
      }
    }
  }
  return w;
}

inline PoolManifest synthetic_manifest(const GenConfig& g) {
  PoolManifest m;
  m.pool_name = "synthetic";
  m.num_classes = g.num_classes;
  m.d_q = g.d_q;
  for (std::size_t d = 0; d < g.num_domains(); ++d) m.domains.push_back("domain" + std::to_string(d));
  for (std::size_t i = 0; i < g.group_label_dims.size(); ++i) {
    m.groups.push_back({static_cast<int>(i), "pretrain" + std::to_string(i), g.group_label_dims[i]});
  }
  for (std::size_t k = 0; k < g.num_models; ++k) {
    m.models.push_back({k, "model" + std::to_string(k), static_cast<int>(g.model_groups[k])});
  }
  return m;
}

/// Deterministic pool for `g`; samples are laid out domain-major, classes
/// balanced within each domain.
inline PoolCache generate_pool(const GenConfig& g) {
  const PlantedWorld w = plant(g);
  const std::size_t num_domains = g.num_domains();
  const std::size_t n = num_domains * g.n_per_domain;
  const std::size_t r = g.latent_dim;

  PoolCache pool;
  pool.manifest = synthetic_manifest(g);
  pool.embeddings = Tensor::matrix(n, g.d_q);
  pool.labels.resize(n);
  pool.domain_ids.resize(n);
  for (std::size_t k = 0; k < g.num_models; ++k) {
    pool.logits.push_back(Tensor::matrix(n, g.group_label_dims[g.model_groups[k]]));
  }

  const Rng root(g.seed);
  Rng label_rng = root.split("labels");
  Rng emb_rng = root.split("embedding_noise");
  Rng logit_rng = root.split("logit_noise");
  Rng confuser_rng = root.split("confuser");
  std::vector<double> latent(2 * r);
  for (std::size_t d = 0; d < num_domains; ++d) {
    std::vector<std::uint32_t> classes(g.n_per_domain);
    for (std::size_t j = 0; j < classes.size(); ++j) classes[j] = static_cast<std::uint32_t>(j % g.num_classes);
    label_rng.shuffle(classes);
    for (std::size_t j = 0; j < g.n_per_domain; ++j) {
      const std::size_t i = d * g.n_per_domain + j;
      const std::size_t y = classes[j];
      pool.labels[i] = static_cast<std::uint32_t>(y);
      pool.domain_ids[i] = static_cast<std::uint32_t>(d);

      std::copy(w.class_latent[y].begin(), w.class_latent[y].end(), latent.begin());
      std::copy(w.domain_latent[d].begin(), w.domain_latent[d].end(), latent.begin() + static_cast<std::ptrdiff_t>(r));
      auto e = pool.embeddings.row(i);
      vec_mat(latent, w.projection, e);
      for (double& v : e) v += emb_rng.normal(0.0, g.embed_noise);

      const std::size_t confused = (y + 1 + confuser_rng.below(g.num_classes - 1)) % g.num_classes;
      for (std::size_t k = 0; k < g.num_models; ++k) {
        const std::size_t grp = g.model_groups[k];
        const double a = w.specialty_at(k, d, y);
        auto z = pool.logits[k].row(i);
        for (double& v : z) v = logit_rng.normal(0.0, g.logit_noise);
        z[w.class_map[grp][y]] += g.signal * a;
        z[w.class_map[grp][confused]] += g.confuser_mass * g.signal * (1.0 - a);
      }
    }
  }
  pool.validate();
  return pool;
}

/// generate_pool + save_pool, with the generating config echoed as
/// gen_config.json.
inline PoolCache write_synthetic_pool(const std::filesystem::path& dir, const GenConfig& g) {
  PoolCache pool = generate_pool(g);
  save_pool(dir, pool);
  write_json_file(dir / "gen_config.json", to_json(g));
  return pool;
}

/// Monte Carlo probability that the true class's label-space coordinate is
/// the strict argmax of model k's logits for class c in domain d. Simulates
/// the logit law directly from the planted specialty and confuser.
inline double oracle_cell_accuracy(const GenConfig& g, const PlantedWorld& w, std::size_t k,
                                   std::size_t d, std::size_t c, std::size_t draws = 10000) {
  const std::size_t c_o = g.group_label_dims[g.model_groups[k]];
  const double a = w.specialty_at(k, d, c);
  const double true_mean = g.signal * a;
  const double confuser_mean = g.confuser_mass * g.signal * (1.0 - a);
  Rng rng = Rng(g.seed).split("oracle").split("cell", (k * 1000003 + d) * 1000003 + c);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < draws; ++t) {
    // Coordinate 0 is the true class, 1 the confuser, the rest background.
    const double truth = true_mean + g.logit_noise * rng.normal();
    bool best = true;
    for (std::size_t j = 1; j < c_o; ++j) {
      const double v = (j == 1 ? confuser_mean : 0.0) + g.logit_noise * rng.normal();
      if (v >= truth) best = false;
    }
    if (best) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

inline double oracle_cell_accuracy(const GenConfig& g, std::size_t k, std::size_t d, std::size_t c,
                                   std::size_t draws = 10000) {
  const PlantedWorld w = plant(g);
  return oracle_cell_accuracy(g, w, k, d, c, draws);
}

/// Mean oracle accuracy of model k over the classes of domain d.
inline double oracle_domain_accuracy(const GenConfig& g, const PlantedWorld& w, std::size_t k,
                                     std::size_t d, std::size_t draws = 10000) {
  double s = 0.0;
  for (std::size_t c = 0; c < g.num_classes; ++c) s += oracle_cell_accuracy(g, w, k, d, c, draws);
  return s / static_cast<double>(g.num_classes);
}

// ---------------------------------------------------------------------------
// Baselines

/// Accuracy of argmax over the mean adapted logits of `models`.
inline double average_ensemble_accuracy(const PoolCache& pool, const Params& params,
                                        std::span<const std::size_t> indices,
                                        std::span<const std::size_t> models) {
  if (indices.empty()) throw std::invalid_argument("accuracy: empty index set");
  std::size_t correct = 0;
  std::vector<double> mean(pool.num_classes());
  for (std::size_t i : indices) {
    const Tensor adapted = adapted_logits(pool, params, i);
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t k : models) {
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += adapted.at(k, j);
    }
    for (double& v : mean) v /= static_cast<double>(models.size());
    if (argmax(mean) == pool.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

/// Trains adapters with L_b under fixed model weights, selecting on the
/// validation accuracy of the `models` average ensemble.
inline RunArtifacts fit_fixed_weight_adapters(const PoolCache& pool, const SplitSpec& split,
                                              const TrainConfig& cfg, std::vector<double> weights,
                                              std::vector<std::size_t> models) {
  return detail::fit(
      pool, split, cfg, initial_params(pool, cfg),
      [&](Params& p, std::span<const std::size_t> batch) {
        LossTerms lt;
        lt.l_b = fixed_weight_step(pool, p, batch, weights, cfg.lr);
        lt.total = lt.l_b;
        return lt;
      },
      [&](const Params& p, std::span<const std::size_t> idx) {
        return average_ensemble_accuracy(pool, p, idx, models);
      });
}

struct BestSingleResult {
  std::vector<double> val_acc;
  std::vector<double> test_acc;
  std::size_t best_model = 0;
  double best_test_acc = 0.0;
};

/// Each model with its own adapter fitted on L_b alone; reports every
/// model's test accuracy and the maximum over models.
inline BestSingleResult baseline_best_single(const PoolCache& pool, const SplitSpec& split,
                                             const TrainConfig& cfg) {
  BestSingleResult r;
  const std::size_t num_models = pool.num_models();
  for (std::size_t k = 0; k < num_models; ++k) {
    std::vector<double> weights(num_models, 0.0);
    weights[k] = 1.0;
    const auto art = fit_fixed_weight_adapters(pool, split, cfg, weights, {k});
    r.val_acc.push_back(art.metrics.val_acc);
    r.test_acc.push_back(art.metrics.test_acc);
    if (k == 0 || art.metrics.test_acc > r.best_test_acc) {
      r.best_test_acc = art.metrics.test_acc;
      r.best_model = k;
    }
  }
  return r;
}

inline std::vector<std::size_t> all_models(std::size_t num_models) {
  std::vector<std::size_t> ids(num_models);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

/// Adapters shared by all models, fitted with uniform weights 1/K.
inline RunArtifacts fit_uniform_adapters(const PoolCache& pool, const SplitSpec& split,
                                         const TrainConfig& cfg) {
  const std::size_t num_models = pool.num_models();
  return fit_fixed_weight_adapters(pool, split, cfg,
                                   std::vector<double>(num_models, 1.0 / static_cast<double>(num_models)),
                                   all_models(num_models));
}

/// Adapters fitted with uniform model weights on every sample of the pool,
/// for analyses that have no trained run to read from.
inline Params fit_pooled_uniform_adapters(const PoolCache& pool, const TrainConfig& cfg) {
  Params params = initial_params(pool, cfg);
  Rng rng = Rng(cfg.seed).split("batches");
  std::vector<std::size_t> batch(cfg.batch_size);
  const std::vector<double> uniform(pool.num_models(), 1.0 / static_cast<double>(pool.num_models()));
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    for (auto& i : batch) i = rng.below(pool.num_samples());
    fixed_weight_step(pool, params, batch, uniform, cfg.lr);
  }
  return params;
}

struct BaselineAccuracy {
  double val_acc = 0.0;
  double test_acc = 0.0;
};

inline BaselineAccuracy baseline_uniform(const PoolCache& pool, const SplitSpec& split,
                                         const TrainConfig& cfg) {
  const auto art = fit_uniform_adapters(pool, split, cfg);
  return {art.metrics.val_acc, art.metrics.test_acc};
}

/// For each sample, k distinct models drawn uniformly (ids summed in
/// ascending order) and their adapted logits averaged.
inline double random_ensemble_accuracy(const PoolCache& pool, const Params& params,
                                       std::span<const std::size_t> indices, std::size_t k,
                                       std::uint64_t seed) {
  const std::size_t num_models = pool.num_models();
  if (k < 1 || k > num_models) {
    throw std::out_of_range("random ensemble: k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(num_models) + "]");
  }
  if (indices.empty()) throw std::invalid_argument("accuracy: empty index set");
  Rng rng = Rng(seed).split("random_ensemble");
  std::size_t correct = 0;
  std::vector<std::size_t> ids = all_models(num_models);
  for (std::size_t i : indices) {
    // Partial Fisher-Yates for the first k slots.
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) std::swap(ids[j], ids[j + rng.below(num_models - j)]);
    std::vector<std::size_t> chosen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end());
    const std::size_t one[] = {i};
    if (average_ensemble_accuracy(pool, params, one, chosen) == 1.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

inline BaselineAccuracy baseline_random_ensemble(const PoolCache& pool, const SplitSpec& split,
                                                 const TrainConfig& cfg, std::size_t k) {
  if (k < 1 || k > pool.num_models()) {
    throw std::out_of_range("random ensemble: k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(pool.num_models()) + "]");
  }
  const auto art = fit_uniform_adapters(pool, split, cfg);
  return {random_ensemble_accuracy(pool, art.best, split.val_indices, k, cfg.seed),
          random_ensemble_accuracy(pool, art.best, split.test_indices, k, cfg.seed + 1)};
}

}  // namespace sedge
