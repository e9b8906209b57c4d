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

// Specialty-aware dispatcher: projects a sample embedding and a learned
// model-embedding dictionary into a joint space, turns the matching scores
// into simplex weights and mixes the adapted model outputs.

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedge/adapter.hpp"
#include "sedge/nn_math.hpp"
#include "sedge/rng.hpp"
#include "sedge/tensor.hpp"

namespace sedge {

/// How adapted outputs are mixed. `logits` mixes adapter outputs directly;
/// `probs` mixes their softmax probabilities.
enum class CombineMode { logits, probs };

inline std::string to_string(CombineMode m) { return m == CombineMode::logits ? "logits" : "probs"; }

inline CombineMode combine_mode_from_string(const std::string& s) {
  if (s == "logits") return CombineMode::logits;
  if (s == "probs") return CombineMode::probs;
  throw std::invalid_argument("combine mode must be 'logits' or 'probs', got '" + s + "'");
}

struct EnsembleNet {
  ParamBlock model_embedding;  // E_m, K x d_m
  ParamBlock sample_proj;      // W_i, d_q x d_v
  ParamBlock model_proj;       // W_m, d_m x d_v
  ParamBlock mlp_weight;       // K x K
  ParamBlock mlp_bias;         // K
  bool has_mlp_bias = true;

  std::size_t num_models() const { return model_embedding.value.rows(); }
  std::size_t embed_dim() const { return sample_proj.value.rows(); }
  std::size_t latent_dim() const { return sample_proj.value.cols(); }
};

struct DispatchResult {
  std::vector<double> scores;
  std::vector<double> weights;
  std::vector<double> y_hat;
  std::vector<std::size_t> selected;
};

inline EnsembleNet init_network(std::size_t num_models, std::size_t d_q, std::size_t d_m,
                                std::size_t d_v, std::uint64_t seed, bool mlp_bias = true) {
  if (num_models == 0 || d_q == 0 || d_m == 0 || d_v == 0) {
    throw std::invalid_argument("init_network: dimensions must be positive");
  }
  Rng rng(seed);
  EnsembleNet net;
  Rng em = rng.split("ens_Em");
  Rng wi = rng.split("ens_Wi");
  Rng wm = rng.split("ens_Wm");
  Rng wmlp = rng.split("ens_Wmlp");
  net.model_embedding = ParamBlock("ens_Em", fan_uniform(num_models, d_m, em));
  net.sample_proj = ParamBlock("ens_Wi", fan_uniform(d_q, d_v, wi));
  net.model_proj = ParamBlock("ens_Wm", fan_uniform(d_m, d_v, wm));
  net.mlp_weight = ParamBlock("ens_Wmlp", fan_uniform(num_models, num_models, wmlp));
  net.mlp_bias = ParamBlock("ens_bmlp", Tensor::vector(num_models));
  net.has_mlp_bias = mlp_bias;
  return net;
}

/// relu(E_m W_m): one row per model. Independent of the sample, so batched
/// callers compute it once.
inline Tensor model_codes(const EnsembleNet& net) {
  const std::size_t k = net.num_models();
  Tensor codes = Tensor::matrix(k, net.latent_dim());
  for (std::size_t m = 0; m < k; ++m) {
    vec_mat(net.model_embedding.value.row(m), net.model_proj.value, codes.row(m));
    for (double& v : codes.row(m)) v = relu(v);
  }
  return codes;
}

inline std::vector<double> matching_scores(std::span<const double> e, const EnsembleNet& net,
                                           const Tensor& codes) {
  if (e.size() != net.embed_dim()) {
    throw std::invalid_argument("matching_scores: embedding length " + std::to_string(e.size()) +
                                " != d_q " + std::to_string(net.embed_dim()));
  }
  std::vector<double> c(net.latent_dim());
  vec_mat(e, net.sample_proj.value, c);
  for (double& v : c) v = relu(v);
  std::vector<double> s(codes.rows(), 0.0);
  for (std::size_t m = 0; m < codes.rows(); ++m) {
    const auto row = codes.row(m);
    double acc = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) acc += c[j] * row[j];
    s[m] = acc;
  }
  return s;
}

inline std::vector<double> matching_scores(std::span<const double> e, const EnsembleNet& net) {
  return matching_scores(e, net, model_codes(net));
}

// softplus(s W + b): the values the weight softmax is taken over.
inline std::vector<double> dispatch_logits(std::span<const double> s, const EnsembleNet& net) {
  const std::size_t k = net.num_models();
  if (s.size() != k) throw std::invalid_argument("dispatch_logits: score length != K");
  std::vector<double> u(k);
  vec_mat(s, net.mlp_weight.value, u);
  for (std::size_t j = 0; j < k; ++j) {
    if (net.has_mlp_bias) u[j] += net.mlp_bias.value[j];
    u[j] = softplus(u[j]);
  }
  return u;
}

inline std::vector<double> ensemble_weights(std::span<const double> s, const EnsembleNet& net) {
  return softmax(dispatch_logits(s, net));
}

/// Indices of the k largest weights, returned in ascending id order. Ties go
/// to the lower model id.
inline std::vector<std::size_t> select_topk(std::span<const double> w, std::size_t k) {
  if (k < 1 || k > w.size()) {
    throw std::out_of_range("top-k: k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(w.size()) + "]");
  }
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

/// Softmax over `values` restricted to `selected`; other entries are 0.
inline std::vector<double> restricted_softmax(std::span<const double> values,
                                              std::span<const std::size_t> selected) {
  std::vector<double> sub(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) sub[i] = values[selected[i]];
  softmax(std::span<const double>(sub), std::span<double>(sub));
  std::vector<double> out(values.size(), 0.0);
  for (std::size_t i = 0; i < selected.size(); ++i) out[selected[i]] = sub[i];
  return out;
}

// Mixes rows of `adapted` (K x C) with `weights`; zero weights are skipped.
inline std::vector<double> combine_outputs(const Tensor& adapted, std::span<const double> weights,
                                           CombineMode mode) {
  const std::size_t c = adapted.cols();
  std::vector<double> y(c, 0.0);
  std::vector<double> probs(c);
  for (std::size_t k = 0; k < adapted.rows(); ++k) {
    if (weights[k] == 0.0) continue;
    std::span<const double> row = adapted.row(k);
    if (mode == CombineMode::probs) {
      softmax(row, probs);
      row = probs;
    }
    for (std::size_t j = 0; j < c; ++j) y[j] += weights[k] * row[j];
  }
  return y;
}

inline void check_adapted(const Tensor& adapted, const EnsembleNet& net) {
  if (adapted.rank() != 2 || adapted.rows() != net.num_models()) {
    throw std::invalid_argument("adapted logits must be K x C with K=" +
                                std::to_string(net.num_models()) + ", got " +
                                shape_string(adapted.dims()));
  }
}

inline DispatchResult ensemble_predict(std::span<const double> e, const Tensor& adapted,
                                       const EnsembleNet& net, const Tensor& codes,
                                       CombineMode mode = CombineMode::logits) {
  check_adapted(adapted, net);
  DispatchResult r;
  r.scores = matching_scores(e, net, codes);
  r.weights = ensemble_weights(r.scores, net);
  r.selected.resize(net.num_models());
  std::iota(r.selected.begin(), r.selected.end(), std::size_t{0});
  r.y_hat = combine_outputs(adapted, r.weights, mode);
  return r;
}

inline DispatchResult ensemble_predict(std::span<const double> e, const Tensor& adapted,
                                       const EnsembleNet& net,
                                       CombineMode mode = CombineMode::logits) {
  return ensemble_predict(e, adapted, net, model_codes(net), mode);
}

/// Keeps the k models with the largest weights and re-applies the softmax
/// over just their dispatch logits, which equals w_i / sum_{selected} w_j.
inline DispatchResult topk_predict(std::span<const double> e, const Tensor& adapted,
                                   const EnsembleNet& net, std::size_t k, const Tensor& codes,
                                   CombineMode mode = CombineMode::logits) {
  check_adapted(adapted, net);
  DispatchResult r;
  r.scores = matching_scores(e, net, codes);
  const auto t = dispatch_logits(r.scores, net);
  const auto full = softmax(t);
  r.selected = select_topk(full, k);
  r.weights = restricted_softmax(t, r.selected);
  r.y_hat = combine_outputs(adapted, r.weights, mode);
  return r;
}

inline DispatchResult topk_predict(std::span<const double> e, const Tensor& adapted,
                                   const EnsembleNet& net, std::size_t k,
                                   CombineMode mode = CombineMode::logits) {
  return topk_predict(e, adapted, net, k, model_codes(net), mode);
}

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace sedge
