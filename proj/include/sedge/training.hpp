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

// Dispatcher training: the three per-sample losses, their gradient routing,
// Adam updates, weight averaging and validation-based early stopping.
//
// Routing:
//   L_c (specialty BCE)      -> ensemble network only; targets p are constants
//   L_b (weighted model CE)  -> adapters only; weights w are constants
//   L_e (ensemble CE)        -> ensemble network and adapters

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sedge/adapter.hpp"
#include "sedge/ensemble_net.hpp"
#include "sedge/evalproto.hpp"
#include "sedge/nn_math.hpp"
#include "sedge/params.hpp"
#include "sedge/pool.hpp"
#include "sedge/rng.hpp"
#include "sedge/text_io.hpp"

namespace sedge {

struct LossWeights {
  double c = 1.0;
  double b = 1.0;
  double e = 1.0;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_iters = 5000;
  std::size_t eval_every = 100;
  std::size_t wa_start_iter = 500;
  std::size_t topk = 6;
  std::size_t patience = 10;  // evaluations without improvement
  LossWeights lambda;
  std::uint64_t seed = 0;
  CombineMode combine = CombineMode::logits;
  ModelOptions model;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("config.lr: must be > 0");
    if (batch_size < 1) throw std::invalid_argument("config.batch_size: must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("config.eval_every: must be >= 1");
    if (wa_start_iter > max_iters) {
      throw std::invalid_argument("config.wa_start_iter (" + std::to_string(wa_start_iter) +
                                  ") must be <= max_iters (" + std::to_string(max_iters) + ")");
    }
    if (topk < 1) throw std::invalid_argument("config.topk: must be >= 1");
    if (patience < 1) throw std::invalid_argument("config.patience: must be >= 1");
    if (lambda.c < 0 || lambda.b < 0 || lambda.e < 0) {
      throw std::invalid_argument("config.lambda: coefficients must be >= 0");
    }
    if (model.d_m < 1 || model.d_v < 1) throw std::invalid_argument("config: d_m, d_v must be >= 1");
  }

  std::size_t effective_topk(std::size_t num_models) const { return std::min(topk, num_models); }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"max_iters", c.max_iters},
          {"eval_every", c.eval_every},
          {"wa_start_iter", c.wa_start_iter},
          {"topk", c.topk},
          {"patience", c.patience},
          {"lambda_c", c.lambda.c},
          {"lambda_b", c.lambda.b},
          {"lambda_e", c.lambda.e},
          {"seed", c.seed},
          {"combine", to_string(c.combine)},
          {"d_m", c.model.d_m},
          {"d_v", c.model.d_v},
          {"adapter_bias", c.model.adapter_bias},
          {"mlp_bias", c.model.mlp_bias}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are an error.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c = base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "max_iters") c.max_iters = v.get<std::size_t>();
      else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
      else if (key == "wa_start_iter") c.wa_start_iter = v.get<std::size_t>();
      else if (key == "topk") c.topk = v.get<std::size_t>();
      else if (key == "patience") c.patience = v.get<std::size_t>();
      else if (key == "lambda_c") c.lambda.c = v.get<double>();
      else if (key == "lambda_b") c.lambda.b = v.get<double>();
      else if (key == "lambda_e") c.lambda.e = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "combine") c.combine = combine_mode_from_string(v.get<std::string>());
      else if (key == "d_m") c.model.d_m = v.get<std::size_t>();
      else if (key == "d_v") c.model.d_v = v.get<std::size_t>();
      else if (key == "adapter_bias") c.model.adapter_bias = v.get<bool>();
      else if (key == "mlp_bias") c.model.mlp_bias = v.get<bool>();
      else throw std::invalid_argument("train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kWeightClamp = 1e-7;

/// Soft-target binary cross-entropy between dispatch weights and sample-level
/// specialties, summed over models.
inline double loss_c(std::span<const double> w, std::span<const double> p) {
  double l = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double wc = std::clamp(w[k], kWeightClamp, 1.0 - kWeightClamp);
    l -= p[k] * std::log(wc) + (1.0 - p[k]) * std::log(1.0 - wc);
  }
  return l;
}

// d loss_c / d w; zero where the clamp is active.
inline std::vector<double> loss_c_grad(std::span<const double> w, std::span<const double> p) {
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] < kWeightClamp || w[k] > 1.0 - kWeightClamp) continue;
    g[k] = -p[k] / w[k] + (1.0 - p[k]) / (1.0 - w[k]);
  }
  return g;
}

inline double loss_b(std::span<const double> w, std::span<const double> per_model_ce) {
  double l = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) l += w[k] * per_model_ce[k];
  return l;
}

inline double loss_e(std::span<const double> y_hat, std::size_t y) {
  return cross_entropy(y_hat, y);
}

/// p(y_i | x_i; theta'_k) for each batch row and model.
inline Tensor specialty_targets(const PoolCache& pool, const Params& params,
                                std::span<const std::size_t> batch) {
  const std::size_t k = pool.num_models();
  Tensor out = Tensor::matrix(batch.size(), k);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const std::size_t i = batch[r];
    const Tensor adapted = adapted_logits(pool, params, i);
    for (std::size_t m = 0; m < k; ++m) out.at(r, m) = model_likelihood(adapted.row(m), pool.labels[i]);
  }
  return out;
}

/// Batch-mean loss terms and the weighted total.
struct LossTerms {
  double l_c = 0.0;
  double l_b = 0.0;
  double l_e = 0.0;
  double total = 0.0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Composite objective. Quantities that the routing treats as constants (the
// specialty targets p and the L_b weights) are read from `detached`; when
// `detached` is `live` this is the training objective. Gradients, when
// requested, are accumulated into `grads` (which may alias `live`).
inline LossTerms objective(const PoolCache& pool, const Params& live, const Params& detached,
                           std::span<const std::size_t> batch, const LossWeights& lw,
                           CombineMode mode, Params* grads) {
  const std::size_t num_models = pool.num_models();
  const std::size_t num_classes = pool.num_classes();
  const EnsembleNet& net = live.net;
  const std::size_t dv = net.latent_dim();
  const bool same = &live == &detached;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  Tensor pre_codes = Tensor::matrix(num_models, dv);
  Tensor codes = Tensor::matrix(num_models, dv);
  for (std::size_t m = 0; m < num_models; ++m) {
    vec_mat(net.model_embedding.value.row(m), net.model_proj.value, pre_codes.row(m));
    for (std::size_t v = 0; v < dv; ++v) codes.at(m, v) = relu(pre_codes.at(m, v));
  }
  const Tensor detached_codes = same ? Tensor() : model_codes(detached.net);
  Tensor d_codes = Tensor::matrix(num_models, dv);

  std::vector<double> h(dv), c(dv), dc(dv), dh(dv);
  std::vector<double> s(num_models), u(num_models), w(num_models), p(num_models), ce(num_models);
  std::vector<double> dw(num_models), du(num_models), ds(num_models);
  std::vector<double> y_hat(num_classes), g_hat(num_classes), da(num_classes);
  Tensor probs = Tensor::matrix(num_models, num_classes);

  LossTerms sums;
  for (std::size_t i : batch) {
    const std::size_t y = pool.labels[i];
    const auto e = pool.embeddings.row(i);

    vec_mat(e, net.sample_proj.value, h);
    for (std::size_t v = 0; v < dv; ++v) c[v] = relu(h[v]);
    for (std::size_t m = 0; m < num_models; ++m) s[m] = dot(c, codes.row(m));
    vec_mat(s, net.mlp_weight.value, u);
    if (net.has_mlp_bias) {
      for (std::size_t m = 0; m < num_models; ++m) u[m] += net.mlp_bias.value[m];
    }
    std::vector<double> t(num_models);
    for (std::size_t m = 0; m < num_models; ++m) t[m] = softplus(u[m]);
    softmax(t, w);

    const Tensor adapted = adapted_logits(pool, live, i);
    for (std::size_t m = 0; m < num_models; ++m) {
      softmax(adapted.row(m), probs.row(m));
      ce[m] = cross_entropy(adapted.row(m), y);
    }

    std::vector<double> w_fixed;
    if (same) {
      for (std::size_t m = 0; m < num_models; ++m) p[m] = model_likelihood(adapted.row(m), y);
      w_fixed = w;
    } else {
      const Tensor adapted_fixed = adapted_logits(pool, detached, i);
      for (std::size_t m = 0; m < num_models; ++m) p[m] = model_likelihood(adapted_fixed.row(m), y);
      w_fixed = ensemble_weights(matching_scores(e, detached.net, detached_codes), detached.net);
    }

    const double lc = loss_c(w, p);
    const double lb = loss_b(w_fixed, ce);
    y_hat = combine_outputs(adapted, w, mode);
    const double le = mode == CombineMode::logits ? loss_e(y_hat, y) : -std::log(y_hat[y]);
    sums.l_c += lc;
    sums.l_b += lb;
    sums.l_e += le;
    if (grads == nullptr) continue;

    // d total / d w
    std::fill(dw.begin(), dw.end(), 0.0);
    if (lw.c != 0.0) {
      const auto g = loss_c_grad(w, p);
      for (std::size_t m = 0; m < num_models; ++m) dw[m] += lw.c * inv_b * g[m];
    }
    if (lw.e != 0.0) {
      if (mode == CombineMode::logits) {
        g_hat = cross_entropy_grad(y_hat, y);
        for (std::size_t m = 0; m < num_models; ++m) dw[m] += lw.e * inv_b * dot(g_hat, adapted.row(m));
      } else {
        for (std::size_t m = 0; m < num_models; ++m) dw[m] -= lw.e * inv_b * probs.at(m, y) / y_hat[y];
      }
    }

    // Adapters.
    if (lw.b != 0.0 || lw.e != 0.0) {
      for (std::size_t m = 0; m < num_models; ++m) {
        std::fill(da.begin(), da.end(), 0.0);
        const auto pr = probs.row(m);
        if (lw.b != 0.0) {
          const double coef = lw.b * inv_b * w_fixed[m];
          for (std::size_t j = 0; j < num_classes; ++j) da[j] += coef * (pr[j] - (j == y ? 1.0 : 0.0));
        }
        if (lw.e != 0.0) {
          if (mode == CombineMode::logits) {
            const double coef = lw.e * inv_b * w[m];
            for (std::size_t j = 0; j < num_classes; ++j) da[j] += coef * g_hat[j];
          } else {
            const double coef = -lw.e * inv_b * w[m] * pr[y] / y_hat[y];
            for (std::size_t j = 0; j < num_classes; ++j) da[j] += coef * ((j == y ? 1.0 : 0.0) - pr[j]);
          }
        }
        AdapterGroup& ag = grads->adapters[pool.manifest.model_group_index(m)];
        const auto z = pool.logits[m].row(i);
        for (std::size_t r = 0; r < z.size(); ++r) {
          auto grow = ag.weight.grad.row(r);
          for (std::size_t j = 0; j < num_classes; ++j) grow[j] += z[r] * da[j];
        }
        if (ag.has_bias) {
          for (std::size_t j = 0; j < num_classes; ++j) ag.bias.grad[j] += da[j];
        }
      }
    }

    // Ensemble network.
    if (lw.c != 0.0 || lw.e != 0.0) {
      const double wdw = dot(w, dw);
      for (std::size_t m = 0; m < num_models; ++m) du[m] = w[m] * (dw[m] - wdw) * softplus_grad(u[m]);
      EnsembleNet& gn = grads->net;
      for (std::size_t m = 0; m < num_models; ++m) {
        auto grow = gn.mlp_weight.grad.row(m);
        for (std::size_t j = 0; j < num_models; ++j) grow[j] += s[m] * du[j];
        ds[m] = dot(net.mlp_weight.value.row(m), du);
      }
      if (net.has_mlp_bias) {
        for (std::size_t m = 0; m < num_models; ++m) gn.mlp_bias.grad[m] += du[m];
      }
      std::fill(dc.begin(), dc.end(), 0.0);
      for (std::size_t m = 0; m < num_models; ++m) {
        const auto crow = codes.row(m);
        auto dcrow = d_codes.row(m);
        for (std::size_t v = 0; v < dv; ++v) {
          dcrow[v] += ds[m] * c[v];
          dc[v] += ds[m] * crow[v];
        }
      }
      for (std::size_t v = 0; v < dv; ++v) dh[v] = dc[v] * relu_grad(h[v]);
      for (std::size_t q = 0; q < e.size(); ++q) {
        auto grow = gn.sample_proj.grad.row(q);
        for (std::size_t v = 0; v < dv; ++v) grow[v] += e[q] * dh[v];
      }
    }
  }

  if (grads != nullptr && (lw.c != 0.0 || lw.e != 0.0)) {
    EnsembleNet& gn = grads->net;
    const std::size_t dm = net.model_embedding.value.cols();
    for (std::size_t m = 0; m < num_models; ++m) {
      for (std::size_t v = 0; v < dv; ++v) {
        const double d = d_codes.at(m, v) * relu_grad(pre_codes.at(m, v));
        if (d == 0.0) continue;
        for (std::size_t a = 0; a < dm; ++a) {
          gn.model_proj.grad.at(a, v) += net.model_embedding.value.at(m, a) * d;
          gn.model_embedding.grad.at(m, a) += d * net.model_proj.value.at(a, v);
        }
      }
    }
  }

  LossTerms out;
  out.l_c = sums.l_c * inv_b;
  out.l_b = sums.l_b * inv_b;
  out.l_e = sums.l_e * inv_b;
  out.total = lw.c * out.l_c + lw.b * out.l_b + lw.e * out.l_e;
  return out;
}

}  // namespace detail

/// Value of the composite objective with the routed constants taken from
/// `detached`. Its gradient with respect to `params` at params == detached
/// is exactly what accumulate_gradients produces.
inline LossTerms composite_loss(const PoolCache& pool, const Params& params,
                                std::span<const std::size_t> batch, const LossWeights& lw,
                                CombineMode mode, const Params& detached) {
  return detail::objective(pool, params, detached, batch, lw, mode, nullptr);
}

inline LossTerms composite_loss(const PoolCache& pool, const Params& params,
                                std::span<const std::size_t> batch, const LossWeights& lw,
                                CombineMode mode = CombineMode::logits) {
  return detail::objective(pool, params, params, batch, lw, mode, nullptr);
}

/// Adds the routed gradients of the batch objective into the params' grad
/// accumulators.
inline LossTerms accumulate_gradients(const PoolCache& pool, Params& params,
                                      std::span<const std::size_t> batch, const LossWeights& lw,
                                      CombineMode mode = CombineMode::logits) {
  return detail::objective(pool, params, params, batch, lw, mode, &params);
}

inline LossTerms train_step(const PoolCache& pool, Params& params,
                            std::span<const std::size_t> batch, const TrainConfig& cfg) {
  zero_grads(params);
  const LossTerms lt = accumulate_gradients(pool, params, batch, cfg.lambda, cfg.combine);
  const AdamConfig adam{.lr = cfg.lr};
  for (ParamBlock* b : param_blocks(params)) adam_step(*b, adam);
  return lt;
}

/// Adapter-only objective: L_b with caller-supplied constant model weights.
/// Used to fit adapters for the single-model and uniform-ensemble baselines.
inline double fixed_weight_step(const PoolCache& pool, Params& params,
                                std::span<const std::size_t> batch,
                                std::span<const double> weights, double lr) {
  for (ParamBlock* b : adapter_blocks(params)) b->zero_grad();
  const std::size_t num_classes = pool.num_classes();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> da(num_classes);
  double loss = 0.0;
  for (std::size_t i : batch) {
    const std::size_t y = pool.labels[i];
    for (std::size_t m = 0; m < pool.num_models(); ++m) {
      if (weights[m] == 0.0) continue;
      AdapterGroup& ag = params.adapters[pool.manifest.model_group_index(m)];
      const auto z = pool.logits[m].row(i);
      const auto a = adapt_logits(z, ag);
      loss += weights[m] * cross_entropy(a, y) * inv_b;
      const auto g = cross_entropy_grad(a, y);
      for (std::size_t j = 0; j < num_classes; ++j) da[j] = weights[m] * inv_b * g[j];
      for (std::size_t r = 0; r < z.size(); ++r) {
        auto grow = ag.weight.grad.row(r);
        for (std::size_t j = 0; j < num_classes; ++j) grow[j] += z[r] * da[j];
      }
      if (ag.has_bias) {
        for (std::size_t j = 0; j < num_classes; ++j) ag.bias.grad[j] += da[j];
      }
    }
  }
  const AdamConfig adam{.lr = lr};
  for (ParamBlock* b : adapter_blocks(params)) adam_step(*b, adam);
  return loss;
}

// ---------------------------------------------------------------------------
// Weight averaging

inline void weight_average_update(Tensor& avg, const Tensor& current, std::size_t n_snapshots) {
  const double n = static_cast<double>(n_snapshots);
  for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = (avg[i] * n + current[i]) / (n + 1.0);
}

/// Running arithmetic mean over parameter values: avg <- (avg*n + cur)/(n+1).
inline void weight_average_update(Params& avg, const Params& current, std::size_t n_snapshots) {
  auto dst = param_blocks(avg);
  const auto src = param_blocks(current);
  for (std::size_t b = 0; b < dst.size(); ++b) {
    weight_average_update(dst[b]->value, src[b]->value, n_snapshots);
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct HistoryRow {
  std::size_t iter = 0;
  double l_c = 0.0;
  double l_b = 0.0;
  double l_e = 0.0;
  double val_acc = 0.0;
};

struct SplitMetrics {
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct RunArtifacts {
  TrainConfig config;
  std::size_t target_domain = 0;
  Params best;  // parameters of the best validation evaluation
  Params final_params;
  std::optional<Params> averaged;
  std::size_t averaged_snapshots = 0;
  std::vector<HistoryRow> history;
  std::size_t best_val_iter = 0;
  std::size_t iterations_run = 0;
  bool early_stopped = false;
  SplitMetrics metrics;
};

struct TrainHooks {
  // Called after every optimizer step with the live parameters.
  std::function<void(std::size_t iter, const Params&)> on_step;
};

namespace detail {

// Shared loop for the dispatcher and the adapter-only baselines. `step`
// performs one update on a batch; `accuracy` scores a parameter set on an
// index set.
template <class Step, class Accuracy>
RunArtifacts fit(const PoolCache& pool, const SplitSpec& split, const TrainConfig& cfg,
                 Params params, Step&& step, Accuracy&& accuracy, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (split.train_indices.empty()) throw std::invalid_argument("train: empty training split");
  if (split.val_indices.empty()) throw std::invalid_argument("train: empty validation split");

  RunArtifacts art;
  art.config = cfg;
  art.target_domain = split.target_domain;
  art.best = params;
  double best_val = accuracy(params, split.val_indices);

  Rng batch_rng = Rng(cfg.seed).split("batches");
  std::vector<std::size_t> batch(cfg.batch_size);
  LossTerms window;
  std::size_t window_steps = 0;
  std::size_t stale = 0;

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    for (auto& idx : batch) {
      idx = split.train_indices[batch_rng.below(split.train_indices.size())];
      if (pool.domain_ids[idx] == split.target_domain) {
        throw std::logic_error("target-domain sample " + std::to_string(idx) + " in training batch");
      }
    }
    const LossTerms lt = step(params, std::span<const std::size_t>(batch));
    window.l_c += lt.l_c;
    window.l_b += lt.l_b;
    window.l_e += lt.l_e;
    ++window_steps;
    art.iterations_run = iter;
    if (hooks.on_step) hooks.on_step(iter, params);

    if (iter >= cfg.wa_start_iter) {
      if (!art.averaged) {
        art.averaged = params;
      } else {
        weight_average_update(*art.averaged, params, art.averaged_snapshots);
      }
      ++art.averaged_snapshots;
    }

    if (iter % cfg.eval_every == 0 || iter == cfg.max_iters) {
      const Params& eval_params = art.averaged ? *art.averaged : params;
      const double acc = accuracy(eval_params, split.val_indices);
      const double n = static_cast<double>(window_steps);
      art.history.push_back({iter, window.l_c / n, window.l_b / n, window.l_e / n, acc});
      window = {};
      window_steps = 0;
      if (acc > best_val) {
        best_val = acc;
        art.best = eval_params;
        art.best_val_iter = iter;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        art.early_stopped = true;
        break;
      }
    }
  }

  art.final_params = std::move(params);
  art.metrics.train_acc = accuracy(art.best, split.train_indices);
  art.metrics.val_acc = best_val;
  art.metrics.test_acc = accuracy(art.best, split.test_indices);
  return art;
}

}  // namespace detail

inline Params initial_params(const PoolCache& pool, const TrainConfig& cfg) {
  return init_params(pool.manifest, cfg.model, Rng(cfg.seed).split("init").seed());
}

inline RunArtifacts train(const PoolCache& pool, const SplitSpec& split, const TrainConfig& cfg,
                          const TrainHooks& hooks = {}) {
  const std::size_t topk = cfg.effective_topk(pool.num_models());
  return detail::fit(
      pool, split, cfg, initial_params(pool, cfg),
      [&](Params& p, std::span<const std::size_t> batch) { return train_step(pool, p, batch, cfg); },
      [&](const Params& p, std::span<const std::size_t> idx) {
        return evaluate(pool, p, idx, topk, cfg.combine);
      },
      hooks);
}

/// Leave-one-domain-out training with the split drawn from cfg.seed.
inline RunArtifacts train(const PoolCache& pool, std::size_t target_domain, const TrainConfig& cfg,
                          const TrainHooks& hooks = {}) {
  return train(pool, split_dataset(pool, target_domain, cfg.seed), cfg, hooks);
}

// ---------------------------------------------------------------------------
// Run directories

inline std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = csv_line({"iter", "l_c", "l_b", "l_e", "val_acc"});
  for (const auto& r : rows) {
    out += csv_line({std::to_string(r.iter), format_double(r.l_c), format_double(r.l_b),
                     format_double(r.l_e), format_double(r.val_acc)});
  }
  return out;
}

inline nlohmann::ordered_json run_summary(const RunArtifacts& art, const PoolManifest& manifest) {
  nlohmann::ordered_json j;
  j["pool_name"] = manifest.pool_name;
  j["target_domain"] = manifest.domains.at(art.target_domain);
  j["config"] = to_json(art.config);
  j["iterations_run"] = art.iterations_run;
  j["early_stopped"] = art.early_stopped;
  j["best_val_iter"] = art.best_val_iter;
  j["averaged_snapshots"] = art.averaged_snapshots;
  j["metrics"] = {{"train_acc", art.metrics.train_acc},
                  {"val_acc", art.metrics.val_acc},
                  {"test_acc", art.metrics.test_acc}};
  return j;
}

/// Best-validation parameters at the top level, plus final/ and (when
/// averaging ran) averaged/ subdirectories, history.csv and run.json.
inline void save_run(const std::filesystem::path& dir, const RunArtifacts& art,
                     const PoolManifest& manifest) {
  std::filesystem::create_directories(dir);
  save_params(dir, art.best);
  save_params(dir / "final", art.final_params);
  if (art.averaged) save_params(dir / "averaged", *art.averaged);
  write_text_file(dir / "history.csv", history_csv(art.history));
  write_json_file(dir / "run.json", run_summary(art, manifest));
}

/// Best-validation parameters and config of a saved run.
struct LoadedRun {
  TrainConfig config;
  std::string target_domain;
  Params params;
};

inline LoadedRun load_run(const std::filesystem::path& dir, const PoolManifest& manifest) {
  const auto j = read_json_file(dir / "run.json");
  LoadedRun r;
  r.config = train_config_from_json(j.at("config"));
  r.target_domain = j.at("target_domain").get<std::string>();
  r.params = load_params(dir, manifest, r.config.model);
  return r;
}

}  // namespace sedge
