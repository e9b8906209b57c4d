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
#include <string>
#include <vector>

#include "sedge/adapter.hpp"
#include "sedge/ensemble_net.hpp"
#include "sedge/pool.hpp"
#include "sedge/rng.hpp"
#include "sedge/tensor_io.hpp"

namespace sedge {

struct ModelOptions {
  std::size_t d_m = 64;
  std::size_t d_v = 64;
  bool adapter_bias = true;
  bool mlp_bias = true;
};

/// All trainable state: one adapter per pretraining group (in manifest group
/// order) plus the dispatcher.
struct Params {
  std::vector<AdapterGroup> adapters;
  EnsembleNet net;

  const AdapterGroup& adapter_for(const PoolManifest& m, std::size_t k) const {
    return adapters[m.model_group_index(k)];
  }
};

inline Params init_params(const PoolManifest& manifest, const ModelOptions& opts,
                          std::uint64_t seed) {
  Rng rng(seed);
  Params p;
  for (const auto& g : manifest.groups) {
    p.adapters.push_back(init_adapter(g.group_id, g.c_o, manifest.num_classes, opts.adapter_bias,
                                      rng.split("adapter", static_cast<std::uint64_t>(g.group_id))));
  }
  p.net = init_network(manifest.num_models(), manifest.d_q, opts.d_m, opts.d_v,
                       rng.split("ensemble").seed(), opts.mlp_bias);
  return p;
}

/// Trainable blocks in a fixed order. Disabled biases are left out.
inline std::vector<ParamBlock*> param_blocks(Params& p) {
  std::vector<ParamBlock*> out;
  for (auto& a : p.adapters) {
    out.push_back(&a.weight);
    if (a.has_bias) out.push_back(&a.bias);
  }
  out.push_back(&p.net.model_embedding);
  out.push_back(&p.net.sample_proj);
  out.push_back(&p.net.model_proj);
  out.push_back(&p.net.mlp_weight);
  if (p.net.has_mlp_bias) out.push_back(&p.net.mlp_bias);
  return out;
}

inline std::vector<const ParamBlock*> param_blocks(const Params& p) {
  std::vector<const ParamBlock*> out;
  for (ParamBlock* b : param_blocks(const_cast<Params&>(p))) out.push_back(b);
  return out;
}

inline std::vector<ParamBlock*> adapter_blocks(Params& p) {
  std::vector<ParamBlock*> out;
  for (auto& a : p.adapters) {
    out.push_back(&a.weight);
    if (a.has_bias) out.push_back(&a.bias);
  }
  return out;
}

inline std::vector<ParamBlock*> network_blocks(Params& p) {
  std::vector<ParamBlock*> out = {&p.net.model_embedding, &p.net.sample_proj, &p.net.model_proj,
                                  &p.net.mlp_weight};
  if (p.net.has_mlp_bias) out.push_back(&p.net.mlp_bias);
  return out;
}

inline void zero_grads(Params& p) {
  for (ParamBlock* b : param_blocks(p)) b->zero_grad();
}

/// Adapter outputs of every model for sample i, one row per model.
inline Tensor adapted_logits(const PoolCache& pool, const Params& p, std::size_t i) {
  const std::size_t k = pool.num_models();
  Tensor out = Tensor::matrix(k, pool.num_classes());
  for (std::size_t m = 0; m < k; ++m) {
    adapt_logits(pool.logits[m].row(i), p.adapter_for(pool.manifest, m), out.row(m));
  }
  return out;
}

inline void save_params(const std::filesystem::path& dir, const Params& p) {
  std::filesystem::create_directories(dir);
  for (const auto& a : p.adapters) {
    const std::string stem = "adapter_" + std::to_string(a.group_id);
    write_tensor(dir / (stem + "_W.bin"), a.weight.value);
    write_tensor(dir / (stem + "_b.bin"), a.bias.value);
  }
  write_tensor(dir / "ens_Em.bin", p.net.model_embedding.value);
  write_tensor(dir / "ens_Wi.bin", p.net.sample_proj.value);
  write_tensor(dir / "ens_Wm.bin", p.net.model_proj.value);
  write_tensor(dir / "ens_Wmlp.bin", p.net.mlp_weight.value);
  write_tensor(dir / "ens_bmlp.bin", p.net.mlp_bias.value);
}

// Latent sizes are taken from the stored tensors; bias flags from `opts`.
inline Params load_params(const std::filesystem::path& dir, const PoolManifest& manifest,
                          ModelOptions opts) {
  opts.d_m = read_tensor(dir / "ens_Em.bin").cols();
  opts.d_v = read_tensor(dir / "ens_Wi.bin").cols();
  auto load = [&](ParamBlock& b, const std::string& file, const std::vector<std::size_t>& dims) {
    Tensor t = read_tensor(dir / file);
    if (t.dims() != dims) {
      throw PoolError(file + ": shape " + shape_string(t.dims()) + ", expected " +
                      shape_string(dims));
    }
    b = ParamBlock(b.name, std::move(t));
  };
  Params p = init_params(manifest, opts, 0);
  const std::size_t c = manifest.num_classes;
  const std::size_t k = manifest.num_models();
  for (std::size_t g = 0; g < p.adapters.size(); ++g) {
    const std::string stem = "adapter_" + std::to_string(p.adapters[g].group_id);
    load(p.adapters[g].weight, stem + "_W.bin", {manifest.groups[g].c_o, c});
    load(p.adapters[g].bias, stem + "_b.bin", {c});
  }
  load(p.net.model_embedding, "ens_Em.bin", {k, opts.d_m});
  load(p.net.sample_proj, "ens_Wi.bin", {manifest.d_q, opts.d_v});
  load(p.net.model_proj, "ens_Wm.bin", {opts.d_m, opts.d_v});
  load(p.net.mlp_weight, "ens_Wmlp.bin", {k, k});
  load(p.net.mlp_bias, "ens_bmlp.bin", {k});
  return p;
}

}  // namespace sedge
