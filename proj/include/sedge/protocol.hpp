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

// Multi-seed leave-one-domain-out protocol: every domain serves as target
// once per seed; results are aggregated per domain and over domains.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sedge/evalproto.hpp"
#include "sedge/pool.hpp"
#include "sedge/synth_bench.hpp"
#include "sedge/text_io.hpp"
#include "sedge/training.hpp"

namespace sedge {

enum class Method { sedge, best_single, uniform, random_ensemble };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::sedge: return "sedge";
    case Method::best_single: return "best-single";
    case Method::uniform: return "uniform";
    case Method::random_ensemble: return "random";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "sedge") return Method::sedge;
  if (s == "best-single") return Method::best_single;
  if (s == "uniform") return Method::uniform;
  if (s == "random") return Method::random_ensemble;
  throw std::invalid_argument("unknown method '" + s + "' (sedge|best-single|uniform|random)");
}

struct ProtocolOptions {
  std::size_t num_seeds = 3;
  std::size_t jobs = 1;
  std::vector<Method> methods = {Method::sedge};
  std::size_t random_k = 6;  // clamped to K
};

struct ProtocolRow {
  std::string dataset;
  std::string target_domain;
  std::uint64_t seed = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::string method;
};

struct DomainAggregate {
  std::string domain;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds
};

struct MethodAggregate {
  std::vector<DomainAggregate> per_domain;
  double grand_average = 0.0;  // mean of per-domain means
};

struct ProtocolReport {
  std::vector<ProtocolRow> rows;
  std::map<std::string, MethodAggregate> aggregate;
};

/// One (method, target, seed) cell of the protocol.
inline ProtocolRow run_cell(const PoolCache& pool, const TrainConfig& base, Method method,
                            std::size_t target, std::uint64_t seed, std::size_t random_k) {
  TrainConfig cfg = base;
  cfg.seed = seed;
  const SplitSpec split = split_dataset(pool, target, seed);
  ProtocolRow row{pool.manifest.pool_name, pool.manifest.domains[target], seed, 0.0, 0.0,
                  to_string(method)};
  switch (method) {
    case Method::sedge: {
      const auto art = train(pool, split, cfg);
      row.val_acc = art.metrics.val_acc;
      row.test_acc = art.metrics.test_acc;
      break;
    }
    case Method::best_single: {
      const auto r = baseline_best_single(pool, split, cfg);
      row.val_acc = r.val_acc[r.best_model];
      row.test_acc = r.best_test_acc;
      break;
    }
    case Method::uniform: {
      const auto r = baseline_uniform(pool, split, cfg);
      row.val_acc = r.val_acc;
      row.test_acc = r.test_acc;
      break;
    }
    case Method::random_ensemble: {
      const auto r =
          baseline_random_ensemble(pool, split, cfg, std::min(random_k, pool.num_models()));
      row.val_acc = r.val_acc;
      row.test_acc = r.test_acc;
      break;
    }
  }
  return row;
}

inline MethodAggregate aggregate_rows(const std::vector<ProtocolRow>& rows,
                                      const PoolManifest& manifest, const std::string& method) {
  MethodAggregate agg;
  double sum_means = 0.0;
  for (const auto& domain : manifest.domains) {
    std::vector<double> acc;
    for (const auto& r : rows) {
      if (r.method == method && r.target_domain == domain) acc.push_back(r.test_acc);
    }
    if (acc.empty()) continue;
    double mean = 0.0;
    for (double a : acc) mean += a;
    mean /= static_cast<double>(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    const double sd = acc.size() > 1 ? std::sqrt(var / static_cast<double>(acc.size() - 1)) : 0.0;
    agg.per_domain.push_back({domain, mean, sd});
    sum_means += mean;
  }
  if (!agg.per_domain.empty()) agg.grand_average = sum_means / static_cast<double>(agg.per_domain.size());
  return agg;
}

/// Runs every (method, target domain, seed) cell with seeds
/// base.seed + {0, .., num_seeds-1}. Cells may run on `jobs` threads; rows
/// come back in (method, domain, seed) order regardless.
inline ProtocolReport run_protocol(const PoolCache& pool, const TrainConfig& base,
                                   const ProtocolOptions& opts = {}) {
  base.validate();
  if (pool.num_domains() < 2) throw std::invalid_argument("protocol: need at least 2 domains");
  struct Cell {
    Method method;
    std::size_t target;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Method m : opts.methods) {
    for (std::size_t d = 0; d < pool.num_domains(); ++d) {
      for (std::size_t s = 0; s < opts.num_seeds; ++s) cells.push_back({m, d, base.seed + s});
    }
  }
  std::vector<ProtocolRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      try {
        rows[c] = run_cell(pool, base, cells[c].method, cells[c].target, cells[c].seed, opts.random_k);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);

  ProtocolReport report;
  report.rows = std::move(rows);
  for (Method m : opts.methods) {
    report.aggregate[to_string(m)] = aggregate_rows(report.rows, pool.manifest, to_string(m));
  }
  return report;
}

inline std::string protocol_csv_header() {
  return csv_line({"dataset", "target_domain", "seed", "val_acc", "test_acc", "method"});
}

inline std::string protocol_csv_row(const ProtocolRow& r) {
  return csv_line({r.dataset, r.target_domain, std::to_string(r.seed), format_double(r.val_acc),
                   format_double(r.test_acc), r.method});
}

inline std::string protocol_csv(const ProtocolReport& report) {
  std::string out = protocol_csv_header();
  for (const auto& r : report.rows) out += protocol_csv_row(r);
  return out;
}

inline nlohmann::ordered_json protocol_json(const ProtocolReport& report) {
  nlohmann::ordered_json j;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"dataset", r.dataset},
                    {"target_domain", r.target_domain},
                    {"seed", r.seed},
                    {"method", r.method},
                    {"val_acc", r.val_acc},
                    {"test_acc", r.test_acc}});
  }
  auto& agg = j["aggregate"] = nlohmann::ordered_json::object();
  for (const auto& [method, a] : report.aggregate) {
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& d : a.per_domain) per[d.domain] = {{"mean", d.mean}, {"std", d.std}};
    agg[method] = {{"per_domain", per}, {"grand_average", a.grand_average}};
  }
  return j;
}

}  // namespace sedge
