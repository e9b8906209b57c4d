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

// sedge command-line front end: generate synthetic pools, train and
// evaluate dispatchers, run the leave-one-domain-out protocol, baselines and
// specialty analyses. Output is one key=value record per line.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sedge/evalproto.hpp"
#include "sedge/pool.hpp"
#include "sedge/protocol.hpp"
#include "sedge/specialty.hpp"
#include "sedge/synth_bench.hpp"
#include "sedge/training.hpp"

namespace fs = std::filesystem;
using namespace sedge;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConflict = 3;
constexpr int kExitRuntime = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConflictError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One stdout record: key=value pairs separated by spaces.
class Record {
 public:
  Record& add(const std::string& key, const std::string& value) {
    out_ << (first_ ? "" : " ") << key << "=" << value;
    first_ = false;
    return *this;
  }
  Record& add(const std::string& key, double value) {
    std::ostringstream s;
    s.precision(6);
    s << value;
    return add(key, s.str());
  }
  Record& add(const std::string& key, std::size_t value) { return add(key, std::to_string(value)); }
  ~Record() { std::cout << out_.str() << "\n"; }

 private:
  std::ostringstream out_;
  bool first_ = true;
};

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SEDGE_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("SEDGE_SEED must be an unsigned integer, got '") + s + "'");
  }
}

// Creates `dir`, refusing to reuse a non-empty directory unless forced, in
// which case its contents are removed first.
void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConflictError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw ConflictError(dir.string() + " is not empty (use --force to overwrite)");
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

PoolCache open_pool(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("pool directory " + dir + " does not exist");
  return load_pool(dir);
}

std::size_t domain_id(const PoolManifest& m, const std::string& name) {
  try {
    return resolve_domain(m, name);
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  }
}

// Training flags shared by train, protocol and baseline. Unset flags leave
// the config-file (or default) value alone.
struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> max_iters;
  std::optional<std::size_t> eval_every;
  std::optional<std::size_t> wa_start_iter;
  std::optional<std::size_t> topk;
  std::optional<std::size_t> patience;
  std::optional<double> lambda_c;
  std::optional<double> lambda_b;
  std::optional<double> lambda_e;
  std::optional<std::size_t> d_m;
  std::optional<std::size_t> d_v;
  std::string combine;
  std::string adapter_bias;
  std::string mlp_bias;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON training config");
    app->add_option("--seed", seed, "Base seed (default: config, then SEDGE_SEED, then 0)");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch-size", batch_size);
    app->add_option("--max-iters", max_iters);
    app->add_option("--eval-every", eval_every);
    app->add_option("--wa-start", wa_start_iter, "First iteration included in weight averaging");
    app->add_option("--topk", topk, "Models kept at inference (clamped to K)");
    app->add_option("--patience", patience, "Evaluations without improvement before stopping");
    app->add_option("--lambda-c", lambda_c);
    app->add_option("--lambda-b", lambda_b);
    app->add_option("--lambda-e", lambda_e);
    app->add_option("--d-m", d_m, "Model embedding width");
    app->add_option("--d-v", d_v, "Joint latent width");
    app->add_option("--combine", combine)->check(CLI::IsMember({"logits", "probs"}));
    app->add_option("--adapter-bias", adapter_bias)->check(CLI::IsMember({"on", "off"}));
    app->add_option("--mlp-bias", mlp_bias)->check(CLI::IsMember({"on", "off"}));
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (auto s = env_seed()) c.seed = *s;
    try {
      if (!config.empty()) c = train_config_from_json(read_config_file(config), c);
    } catch (const std::invalid_argument& e) {
      throw UsageError(config + ": " + e.what());
    }
    if (seed) c.seed = *seed;
    if (lr) c.lr = *lr;
    if (batch_size) c.batch_size = *batch_size;
    if (max_iters) c.max_iters = *max_iters;
    if (eval_every) c.eval_every = *eval_every;
    if (wa_start_iter) c.wa_start_iter = *wa_start_iter;
    if (topk) c.topk = *topk;
    if (patience) c.patience = *patience;
    if (lambda_c) c.lambda.c = *lambda_c;
    if (lambda_b) c.lambda.b = *lambda_b;
    if (lambda_e) c.lambda.e = *lambda_e;
    if (d_m) c.model.d_m = *d_m;
    if (d_v) c.model.d_v = *d_v;
    if (!combine.empty()) c.combine = combine_mode_from_string(combine);
    if (!adapter_bias.empty()) c.model.adapter_bias = adapter_bias == "on";
    if (!mlp_bias.empty()) c.model.mlp_bias = mlp_bias == "on";
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_gen_synth(const GenArgs& a) {
  GenConfig g;
  if (auto s = env_seed()) g.seed = *s;
  try {
    if (!a.config.empty()) g = gen_config_from_json(read_config_file(a.config), g);
    if (a.seed) g.seed = *a.seed;
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  prepare_output_dir(a.out, a.force);
  const PoolCache pool = write_synthetic_pool(a.out, g);
  Record()
      .add("status", "ok")
      .add("out", a.out)
      .add("samples", pool.num_samples())
      .add("models", pool.num_models())
      .add("domains", pool.num_domains())
      .add("classes", pool.num_classes())
      .add("seed", std::to_string(g.seed));
  return 0;
}

struct TrainArgs {
  std::string pool;
  std::string target;
  std::string out;
  bool force = false;
  TrainFlags flags;
};

int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  const PoolCache pool = open_pool(a.pool);
  const std::size_t target = domain_id(pool.manifest, a.target);
  prepare_output_dir(a.out, a.force);
  write_json_file(fs::path(a.out) / "config.json", to_json(cfg));
  const RunArtifacts art = train(pool, target, cfg);
  save_run(a.out, art, pool.manifest);
  write_json_file(fs::path(a.out) / "report.json", run_summary(art, pool.manifest));
  Record()
      .add("status", "ok")
      .add("target_domain", a.target)
      .add("seed", std::to_string(cfg.seed))
      .add("iterations", art.iterations_run)
      .add("best_iter", art.best_val_iter)
      .add("train_acc", art.metrics.train_acc)
      .add("val_acc", art.metrics.val_acc)
      .add("test_acc", art.metrics.test_acc)
      .add("out", a.out);
  return 0;
}

struct ProtocolArgs {
  std::string pool;
  std::string out;
  bool force = false;
  std::size_t seeds = 3;
  std::size_t jobs = 1;
  std::size_t random_k = 6;
  std::vector<std::string> methods = {"sedge"};
  TrainFlags flags;
};

int cmd_protocol(const ProtocolArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  ProtocolOptions opts;
  opts.num_seeds = a.seeds;
  opts.jobs = a.jobs;
  opts.random_k = a.random_k;
  opts.methods.clear();
  try {
    for (const auto& m : a.methods) opts.methods.push_back(method_from_string(m));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (opts.num_seeds == 0) throw UsageError("--seeds must be >= 1");
  const PoolCache pool = open_pool(a.pool);
  if (pool.num_domains() < 2) throw UsageError("protocol needs a pool with at least 2 domains");
  prepare_output_dir(a.out, a.force);
  nlohmann::ordered_json resolved = to_json(cfg);
  resolved["seeds"] = opts.num_seeds;
  resolved["random_k"] = opts.random_k;
  resolved["methods"] = a.methods;
  write_json_file(fs::path(a.out) / "config.json", resolved);

  const ProtocolReport report = run_protocol(pool, cfg, opts);
  write_text_file(fs::path(a.out) / "report.csv", protocol_csv(report));
  auto j = protocol_json(report);
  j["config"] = resolved;
  write_json_file(fs::path(a.out) / "report.json", j);
  for (const auto& r : report.rows) {
    Record()
        .add("method", r.method)
        .add("target_domain", r.target_domain)
        .add("seed", std::to_string(r.seed))
        .add("val_acc", r.val_acc)
        .add("test_acc", r.test_acc);
  }
  for (const auto& [method, agg] : report.aggregate) {
    for (const auto& d : agg.per_domain) {
      Record().add("method", method).add("domain", d.domain).add("mean", d.mean).add("std", d.std);
    }
    Record().add("method", method).add("grand_average", agg.grand_average);
  }
  Record().add("status", "ok").add("runs", report.rows.size()).add("out", a.out);
  return 0;
}

struct EvalArgs {
  std::string pool;
  std::string run;
  std::string split = "test";
  std::optional<std::size_t> topk;
};

int cmd_eval(const EvalArgs& a) {
  const PoolCache pool = open_pool(a.pool);
  if (!fs::exists(fs::path(a.run) / "run.json")) throw UsageError(a.run + " is not a run directory");
  const LoadedRun run = load_run(a.run, pool.manifest);
  const std::size_t target = domain_id(pool.manifest, run.target_domain);
  const SplitSpec split = split_dataset(pool, target, run.config.seed);
  std::vector<std::size_t> indices;
  if (a.split == "train") indices = split.train_indices;
  else if (a.split == "val") indices = split.val_indices;
  else if (a.split == "test") indices = split.test_indices;
  else {
    indices.resize(pool.num_samples());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  }
  const std::size_t topk = a.topk ? *a.topk : run.config.topk;
  if (topk < 1) throw UsageError("--topk must be >= 1");
  const double acc = evaluate(pool, run.params, indices, topk, run.config.combine);
  Record()
      .add("status", "ok")
      .add("target_domain", run.target_domain)
      .add("split", a.split)
      .add("samples", indices.size())
      .add("topk", std::min(topk, pool.num_models()))
      .add("accuracy", acc);
  return 0;
}

struct AnalyzeArgs {
  std::string pool;
  std::string run;
  std::string what = "specialty";
  std::string level = "domain";
  std::string out;
  bool force = false;
  TrainFlags flags;
};

int cmd_analyze(const AnalyzeArgs& a) {
  if (a.what == "importance" && a.run.empty()) {
    throw UsageError("--what importance needs --run (importance reads trained dispatch weights)");
  }
  const SpecialtyLevel level = specialty_level_from_string(a.level);
  const PoolCache pool = open_pool(a.pool);
  Params params;
  TrainConfig cfg;
  if (!a.run.empty()) {
    if (!fs::exists(fs::path(a.run) / "run.json")) throw UsageError(a.run + " is not a run directory");
    auto run = load_run(a.run, pool.manifest);
    params = std::move(run.params);
    cfg = run.config;
  } else {
    cfg = a.flags.resolve();
  }
  prepare_output_dir(a.out, a.force);
  nlohmann::ordered_json meta;
  meta["what"] = a.what;
  meta["level"] = a.level;
  meta["run"] = a.run;
  meta["kl_smoothing"] = kKlSmoothing;
  meta["config"] = to_json(cfg);
  if (a.run.empty()) {
    meta["adapters"] = "uniform-weight fit on all samples";
    params = fit_pooled_uniform_adapters(pool, cfg);
  }
  write_json_file(fs::path(a.out) / "config.json", meta);

  const fs::path out(a.out);
  const std::string tag = to_string(level);
  if (a.what == "specialty" || a.what == "kl") {
    const SpecialtyMatrix raw = aggregate_specialty(pool, params, level);
    const SpecialtyMatrix norm = minmax_normalize(raw);
    write_text_file(out / ("specialty_" + tag + ".csv"), specialty_csv(raw, pool.manifest));
    write_text_file(out / ("specialty_" + tag + "_normalized.csv"), specialty_csv(norm, pool.manifest));
    Record r;
    r.add("status", "ok").add("level", tag).add("models", raw.num_models()).add("groups", raw.num_groups());
    if (a.what == "kl") {
      const Tensor kl = kl_matrix(norm);
      write_text_file(out / ("kl_" + tag + ".csv"), kl_csv(kl, pool.manifest, level));
      r.add("mean_kl", mean_off_diagonal(kl));
    }
    r.add("out", a.out);
  } else {
    for (std::size_t d = 0; d < pool.num_domains(); ++d) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < pool.num_samples(); ++i) {
        if (pool.domain_ids[i] == d) idx.push_back(i);
      }
      const auto imp = model_importance(params, pool, idx);
      const std::string& name = pool.manifest.domains[d];
      write_text_file(out / ("importance_" + name + ".csv"), importance_csv(imp, pool.manifest));
      std::string ranking_str;
      for (std::size_t m : ranking(imp)) ranking_str += (ranking_str.empty() ? "" : ",") + std::to_string(m);
      Record().add("domain", name).add("ranking", ranking_str);
    }
    Record().add("status", "ok").add("out", a.out);
  }
  return 0;
}

struct BaselineArgs {
  std::string pool;
  std::string method;
  std::string target;
  std::string out;
  std::size_t k = 6;
  bool force = false;
  TrainFlags flags;
};

int cmd_baseline(const BaselineArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  const PoolCache pool = open_pool(a.pool);
  const std::size_t target = domain_id(pool.manifest, a.target);
  Method method;
  try {
    method = method_from_string(a.method);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (method == Method::sedge) throw UsageError("--method must be random, best-single or uniform");
  if (method == Method::random_ensemble && (a.k < 1 || a.k > pool.num_models())) {
    throw UsageError("--k must be in [1, " + std::to_string(pool.num_models()) + "]");
  }
  const fs::path out(a.out);
  if (fs::exists(out) && !fs::is_directory(out)) throw ConflictError(a.out + " is not a directory");
  fs::create_directories(out);
  const fs::path report = out / "report.csv";
  if (a.force) fs::remove(report);

  ProtocolRow row;
  if (method == Method::best_single) {
    const SplitSpec split = split_dataset(pool, target, cfg.seed);
    const auto r = baseline_best_single(pool, split, cfg);
    for (std::size_t k = 0; k < r.test_acc.size(); ++k) {
      Record()
          .add("model", pool.manifest.models[k].name)
          .add("val_acc", r.val_acc[k])
          .add("test_acc", r.test_acc[k]);
    }
    row = {pool.manifest.pool_name, a.target, cfg.seed, r.val_acc[r.best_model], r.best_test_acc,
           to_string(method)};
  } else {
    row = run_cell(pool, cfg, method, target, cfg.seed, a.k);
  }
  const bool fresh = !fs::exists(report);
  std::ofstream f(report, std::ios::app | std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + report.string());
  if (fresh) f << protocol_csv_header();
  f << protocol_csv_row(row);
  f.close();
  if (!f) throw std::runtime_error("write failed: " + report.string());
  write_json_file(out / ("config_" + row.method + ".json"), to_json(cfg));
  Record()
      .add("status", "ok")
      .add("method", row.method)
      .add("target_domain", row.target_domain)
      .add("seed", std::to_string(row.seed))
      .add("val_acc", row.val_acc)
      .add("test_acc", row.test_acc)
      .add("out", a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sedge: per-sample weighted ensembles over frozen model pools"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a planted-specialty synthetic pool");
  gen_cmd->add_option("--config", gen.config, "JSON generator config");
  gen_cmd->add_option("--out", gen.out, "Output pool directory")->required();
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a dispatcher with one held-out domain");
  train_cmd->add_option("pool", tr.pool, "Pool directory")->required();
  train_cmd->add_option("--target-domain", tr.target, "Held-out domain name")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_flag("--force", tr.force);
  tr.flags.attach(train_cmd);

  ProtocolArgs pr;
  auto* proto_cmd = app.add_subcommand("protocol", "Leave-one-domain-out over all domains and seeds");
  proto_cmd->add_option("pool", pr.pool, "Pool directory")->required();
  proto_cmd->add_option("--out", pr.out, "Report directory")->required();
  proto_cmd->add_flag("--force", pr.force);
  proto_cmd->add_option("--seeds", pr.seeds, "Number of seeds per target")->capture_default_str();
  proto_cmd->add_option("--jobs", pr.jobs, "Parallel cells")->capture_default_str();
  proto_cmd->add_option("--methods", pr.methods, "sedge, best-single, uniform, random")->delimiter(',');
  proto_cmd->add_option("--random-k", pr.random_k, "Models per sample for the random ensemble");
  pr.flags.attach(proto_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved run");
  eval_cmd->add_option("pool", ev.pool, "Pool directory")->required();
  eval_cmd->add_option("--run", ev.run, "Run directory")->required();
  eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--topk", ev.topk);

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Specialty, KL and importance analyses");
  an_cmd->add_option("pool", an.pool, "Pool directory")->required();
  an_cmd->add_option("--run", an.run, "Run directory (required for importance)");
  an_cmd->add_option("--what", an.what)->check(CLI::IsMember({"specialty", "kl", "importance"}));
  an_cmd->add_option("--level", an.level)->check(CLI::IsMember({"domain", "class"}));
  an_cmd->add_option("--out", an.out, "Output directory")->required();
  an_cmd->add_flag("--force", an.force);
  an.flags.attach(an_cmd);

  BaselineArgs bl;
  auto* bl_cmd = app.add_subcommand("baseline", "Best-single, uniform or random ensemble baseline");
  bl_cmd->add_option("pool", bl.pool, "Pool directory")->required();
  bl_cmd->add_option("--method", bl.method)
      ->required()
      ->check(CLI::IsMember({"random", "best-single", "uniform"}));
  bl_cmd->add_option("--target-domain", bl.target)->required();
  bl_cmd->add_option("--k", bl.k, "Models per sample for the random ensemble");
  bl_cmd->add_option("--out", bl.out, "Directory holding report.csv (appended)")->required();
  bl_cmd->add_flag("--force", bl.force, "Start a fresh report.csv");
  bl.flags.attach(bl_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_synth(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*proto_cmd) return cmd_protocol(pr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*an_cmd) return cmd_analyze(an);
    if (*bl_cmd) return cmd_baseline(bl);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConflictError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConflict;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
