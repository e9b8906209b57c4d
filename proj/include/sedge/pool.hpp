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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sedge/tensor.hpp"
#include "sedge/tensor_io.hpp"

namespace sedge {

/// Invalid pool directory or manifest. The message names the offending file
/// or field.
class PoolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroupInfo {
  int group_id = 0;
  std::string name;
  std::size_t c_o = 0;  // pretraining label-space dimension

  friend bool operator==(const GroupInfo&, const GroupInfo&) = default;
};

struct ModelInfo {
  std::size_t model_id = 0;
  std::string name;
  int group_id = 0;

  friend bool operator==(const ModelInfo&, const ModelInfo&) = default;
};

struct PoolManifest {
  std::string pool_name;
  std::vector<GroupInfo> groups;
  std::vector<ModelInfo> models;
  std::size_t num_classes = 0;
  std::size_t d_q = 0;
  std::vector<std::string> domains;

  std::size_t num_models() const noexcept { return models.size(); }
  std::size_t num_groups() const noexcept { return groups.size(); }

  /// Position of `group_id` in `groups`.
  std::size_t group_index(int group_id) const {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i].group_id == group_id) return i;
    }
    throw PoolError("manifest: unknown group_id " + std::to_string(group_id));
  }

  std::size_t model_group_index(std::size_t k) const {
    return group_index(models.at(k).group_id);
  }

  std::optional<std::size_t> domain_index(const std::string& name) const {
    for (std::size_t i = 0; i < domains.size(); ++i) {
      if (domains[i] == name) return i;
    }
    return std::nullopt;
  }

  void validate() const {
    if (num_classes < 2) throw PoolError("manifest.num_classes: must be >= 2");
    if (models.empty()) throw PoolError("manifest.models: need at least one model");
    if (d_q < 1) throw PoolError("manifest.d_q: must be >= 1");
    if (domains.empty()) throw PoolError("manifest.domains: empty");
    std::set<int> ids;
    for (const auto& g : groups) {
      if (!ids.insert(g.group_id).second) {
        throw PoolError("manifest.groups: duplicate group_id " + std::to_string(g.group_id));
      }
      if (g.c_o < 1) {
        throw PoolError("manifest.groups[" + std::to_string(g.group_id) + "].c_o: must be >= 1");
      }
    }
    for (std::size_t k = 0; k < models.size(); ++k) {
      if (models[k].model_id != k) {
        throw PoolError("manifest.models[" + std::to_string(k) +
                        "].model_id: ids must be contiguous 0..K-1");
      }
      if (!ids.count(models[k].group_id)) {
        throw PoolError("manifest.models[" + std::to_string(k) + "].group_id: unknown group " +
                        std::to_string(models[k].group_id));
      }
    }
    std::set<std::string> names(domains.begin(), domains.end());
    if (names.size() != domains.size()) throw PoolError("manifest.domains: duplicate name");
  }

  friend bool operator==(const PoolManifest&, const PoolManifest&) = default;
};

inline nlohmann::ordered_json manifest_to_json(const PoolManifest& m) {
  nlohmann::ordered_json j;
  j["pool_name"] = m.pool_name;
  j["num_classes"] = m.num_classes;
  j["d_q"] = m.d_q;
  j["domains"] = m.domains;
  auto& groups = j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : m.groups) {
    groups.push_back({{"group_id", g.group_id}, {"name", g.name}, {"c_o", g.c_o}});
  }
  auto& models = j["models"] = nlohmann::ordered_json::array();
  for (const auto& md : m.models) {
    models.push_back({{"model_id", md.model_id}, {"name", md.name}, {"group_id", md.group_id}});
  }
  return j;
}

inline PoolManifest manifest_from_json(const nlohmann::json& j) {
  PoolManifest m;
  auto field = [&](const nlohmann::json& obj, const char* key,
                   const std::string& where) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key)) {
      throw PoolError("manifest: missing field " + where + key);
    }
    return obj.at(key);
  };
  try {
    m.pool_name = field(j, "pool_name", "").get<std::string>();
    m.num_classes = field(j, "num_classes", "").get<std::size_t>();
    m.d_q = field(j, "d_q", "").get<std::size_t>();
    m.domains = field(j, "domains", "").get<std::vector<std::string>>();
    for (const auto& g : field(j, "groups", "")) {
      m.groups.push_back({field(g, "group_id", "groups[].").get<int>(),
                          field(g, "name", "groups[].").get<std::string>(),
                          field(g, "c_o", "groups[].").get<std::size_t>()});
    }
    for (const auto& md : field(j, "models", "")) {
      m.models.push_back({field(md, "model_id", "models[].").get<std::size_t>(),
                          field(md, "name", "models[].").get<std::string>(),
                          field(md, "group_id", "models[].").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw PoolError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

/// A dataset fused with its frozen model pool. Immutable once loaded; safe to
/// share across reader threads.
struct PoolCache {
  PoolManifest manifest;
  Tensor embeddings;                  // N x d_q
  std::vector<std::uint32_t> labels;  // N
  std::vector<std::uint32_t> domain_ids;
  std::vector<Tensor> logits;         // per model, N x c_o(group(k))

  std::size_t num_samples() const noexcept { return labels.size(); }
  std::size_t num_models() const noexcept { return manifest.num_models(); }
  std::size_t num_classes() const noexcept { return manifest.num_classes; }
  std::size_t num_domains() const noexcept { return manifest.domains.size(); }

  void validate() const {
    manifest.validate();
    const std::size_t n = labels.size();
    if (n == 0) throw PoolError("labels.bin: no samples");
    if (embeddings.rank() != 2 || embeddings.rows() != n ||
        embeddings.cols() != manifest.d_q) {
      throw PoolError("embeddings.bin: shape " + shape_string(embeddings.dims()) +
                      ", expected [" + std::to_string(n) + "," +
                      std::to_string(manifest.d_q) + "]");
    }
    if (domain_ids.size() != n) {
      throw PoolError("domains.bin: length " + std::to_string(domain_ids.size()) +
                      " != N=" + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] >= manifest.num_classes) {
        throw PoolError("labels.bin: label " + std::to_string(labels[i]) + " at index " +
                        std::to_string(i) + " >= C=" + std::to_string(manifest.num_classes));
      }
      if (domain_ids[i] >= manifest.domains.size()) {
        throw PoolError("domains.bin: domain id " + std::to_string(domain_ids[i]) +
                        " at index " + std::to_string(i) + " out of range");
      }
    }
    if (logits.size() != manifest.num_models()) {
      throw PoolError("logits: have " + std::to_string(logits.size()) + " tensors, manifest lists " +
                      std::to_string(manifest.num_models()) + " models");
    }
    for (std::size_t k = 0; k < logits.size(); ++k) {
      const std::size_t c_o = manifest.groups[manifest.model_group_index(k)].c_o;
      const auto& t = logits[k];
      if (t.rank() != 2 || t.rows() != n || t.cols() != c_o) {
        throw PoolError("logits_" + std::to_string(k) + ".bin: shape " + shape_string(t.dims()) +
                        ", expected [" + std::to_string(n) + "," + std::to_string(c_o) + "]");
      }
    }
  }
};

inline std::filesystem::path logits_file(const std::filesystem::path& dir, std::size_t k) {
  return dir / ("logits_" + std::to_string(k) + ".bin");
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw PoolError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw PoolError("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw PoolError("missing file " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw PoolError(path.string() + ": " + e.what());
  }
}

inline void save_pool(const std::filesystem::path& dir, const PoolCache& pool) {
  pool.validate();
  std::filesystem::create_directories(dir);
  write_json_file(dir / "manifest.json", manifest_to_json(pool.manifest));
  write_tensor(dir / "embeddings.bin", pool.embeddings);
  write_index(dir / "labels.bin", pool.labels);
  write_index(dir / "domains.bin", pool.domain_ids);
  for (std::size_t k = 0; k < pool.logits.size(); ++k) {
    write_tensor(logits_file(dir, k), pool.logits[k]);
  }
}

inline PoolCache load_pool(const std::filesystem::path& dir) {
  auto need = [&](const std::string& name) {
    auto p = dir / name;
    if (!std::filesystem::exists(p)) throw PoolError("missing file " + p.string());
    return p;
  };
  PoolCache pool;
  pool.manifest = manifest_from_json(read_json_file(need("manifest.json")));
  try {
    pool.embeddings = read_tensor(need("embeddings.bin"));
    pool.labels = read_index(need("labels.bin"));
    pool.domain_ids = read_index(need("domains.bin"));
    for (std::size_t k = 0; k < pool.manifest.num_models(); ++k) {
      pool.logits.push_back(read_tensor(need("logits_" + std::to_string(k) + ".bin")));
    }
  } catch (const TensorIoError& e) {
    throw PoolError(e.what());
  }
  pool.validate();
  return pool;
}

}  // namespace sedge
