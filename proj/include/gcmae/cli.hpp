// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gcmae/checkpoint.hpp"
#include "gcmae/config.hpp"
#include "gcmae/error.hpp"
#include "gcmae/eval.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/train.hpp"

namespace gcmae {

inline constexpr const char* kVersionTag = "gcmae 0.1.0";

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

namespace cli_detail {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << bytes;
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig c = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& o : overrides) apply_override(c, o);
  validate(c);
  return c;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    seeds.push_back(config_detail::parse_uint("seeds", tok));
  }
  if (seeds.empty()) throw ConfigError("--seeds: empty list");
  return seeds;
}

inline json metrics_json(const Metrics& m) {
  json j = json::object();
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.auc) j["auc"] = *m.auc;
  if (m.ap) j["ap"] = *m.ap;
  if (m.nmi) j["nmi"] = *m.nmi;
  if (m.ari) j["ari"] = *m.ari;
  if (m.probe) j["probe"] = *m.probe;
  return j;
}

// Removes the listed files unless released.
struct OutputGuard {
  std::vector<std::string> paths;
  bool released = false;
  ~OutputGuard() {
    if (released) return;
    std::error_code ec;
    for (const auto& p : paths) fs::remove(p, ec);
  }
};

inline const std::vector<int>& require_labels(const Dataset& ds, const std::string& task) {
  if (!ds.labels) throw DataError("task '" + task + "' needs labels but the dataset has none");
  return *ds.labels;
}

// Val-split probe accuracy, for model selection while training.
inline double validation_accuracy(const ModelParams<float>& params, const Dataset& ds) {
  std::vector<SplitTag> split = ds.split;
  bool any = false;
  for (auto& t : split) {
    if (t == SplitTag::test) {
      t = SplitTag::val;
    } else if (t == SplitTag::val) {
      t = SplitTag::test;
      any = true;
    }
  }
  if (!any) return std::numeric_limits<double>::quiet_NaN();
  const auto h = embed(params, normalize(ds.graph), ds.features);
  return linear_probe(h, *ds.labels, split);
}

}  // namespace cli_detail

/// Training entry used by `train` and `ablate`: returns the trained result.
inline TrainResult run_training(const Dataset& ds, const TrainConfig& config, std::ostream* log,
                                std::ostream* trace_out) {
  return train(ds, config, [&](const EpochRecord& rec, const ModelParams<float>& params) {
    if (trace_out != nullptr) {
      *trace_out << serialize_trace(TrainTrace{{rec}});
      trace_out->flush();
    }
    if (log != nullptr && ds.labels && rec.epoch % 10 == 0) {
      *log << "epoch " << rec.epoch << " total " << rec.losses.total << " val_acc "
           << cli_detail::validation_accuracy(params, ds) << '\n';
    }
  });
}

struct AblationRow {
  std::string name;
  TrainConfig config;
  std::vector<double> accuracy;  // per seed
};

/// The fixed seven-row matrix: full, each loss removed, then the three
/// alternative encoder wirings.
inline std::vector<AblationRow> ablation_rows(const TrainConfig& base) {
  std::vector<AblationRow> rows;
  auto add = [&rows](std::string name, TrainConfig c) { rows.push_back({std::move(name), c, {}}); };
  add("full", base);
  TrainConfig c = base;
  c.weights.alpha = 0.0;
  add("w/o Contrast.", c);
  c = base;
  c.weights.lambda = 0.0;
  add("w/o Stru. Rec.", c);
  c = base;
  c.weights.mu = 0.0;
  add("w/o Disc. Loss", c);
  c = base;
  c.encoder_mode = EncoderMode::mae_only;
  c.weights.alpha = 0.0;
  add("MAE Encoder", c);
  c = base;
  c.encoder_mode = EncoderMode::contrastive_only;
  c.weights.lambda = 0.0;
  add("Contrastive Encoder", c);
  c = base;
  c.encoder_mode = EncoderMode::fusion;
  add("Fusion Encoder", c);
  return rows;
}

/// Probe accuracy of one training run: config seed and split seed both set
/// to `seed`.
inline double ablation_accuracy(const Dataset& ds, TrainConfig config, std::uint64_t seed) {
  config.seed = seed;
  Dataset run = ds;
  run.split = make_split(ds.num_nodes(), ds.labels, seed);
  const auto result = train(run, config);
  const auto h = embed(result.params, normalize(run.graph), run.features);
  return linear_probe(h, *run.labels, run.split);
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant\tencoder_mode\talpha\tlambda\tmu\tconfig_hash\tacc_mean\tacc_std\tacc_per_seed\n";
  using config_detail::format_double;
  for (const auto& r : rows) {
    const auto s = summarize(r.accuracy);
    const auto& w = r.config.weights;
    out << r.name << '\t' << to_string(r.config.encoder_mode) << '\t' << format_double(w.alpha) << '\t'
        << format_double(w.lambda) << '\t' << format_double(w.mu) << '\t' << hash_hex(config_hash(r.config)) << '\t'
        << format_double(s.mean) << '\t' << format_double(s.std) << '\t';
    for (std::size_t i = 0; i < r.accuracy.size(); ++i) out << (i ? "," : "") << format_double(r.accuracy[i]);
    out << '\n';
  }
  return out.str();
}

/// Parses and runs one command line; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"gcmae: masked graph autoencoder with contrastive pretraining"};
  app.require_subcommand(1);

  SbmSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a stochastic block model dataset");
  gen->add_option("--out", gen_out, "output dataset path")->required();
  gen->add_option("--blocks", spec.blocks, "number of blocks")->capture_default_str();
  gen->add_option("--per-block", spec.nodes_per_block, "nodes per block")->capture_default_str();
  gen->add_option("--p-in", spec.p_in, "within-block edge probability")->capture_default_str();
  gen->add_option("--p-out", spec.p_out, "between-block edge probability")->capture_default_str();
  gen->add_option("--feature-dim", spec.feature_dim, "feature dimension")->capture_default_str();
  gen->add_option("--separation", spec.feature_separation, "class-mean offset")->capture_default_str();
  gen->add_option("--noise", spec.noise_sigma, "feature noise sigma")->capture_default_str();
  gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();

  std::string data, config_path, out_dir, checkpoint_path, task, seeds = "0", metrics_out;
  std::vector<std::string> overrides;
  std::uint64_t split_seed = 0;
  std::size_t probe_k = 5, probe_samples = 64;

  auto* tr = app.add_subcommand("train", "train a model; writes checkpoint, trace and manifest");
  tr->add_option("--data", data, "dataset path")->required();
  tr->add_option("--config", config_path, "key=value config file");
  tr->add_option("--set", overrides, "override one config key (key=value), repeatable");
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--split-seed", split_seed, "seed of the node split")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a downstream task");
  ev->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  ev->add_option("--data", data, "dataset path")->required();
  ev->add_option("--task", task, "classify | linkpred | cluster | probe | pca")
      ->required()
      ->check(CLI::IsMember({"classify", "linkpred", "cluster", "probe", "pca"}));
  ev->add_option("--seeds", seeds, "comma-separated seed list")->capture_default_str();
  ev->add_option("--config", config_path, "config the checkpoint was trained with");
  ev->add_option("--set", overrides, "override one config key (key=value), repeatable");
  ev->add_option("--k", probe_k, "hop distance for the probe task")->capture_default_str();
  ev->add_option("--samples", probe_samples, "sampled nodes for the probe task")->capture_default_str();
  ev->add_option("--out", metrics_out, "output file (JSON lines, or CSV for pca)")->required();

  auto* ab = app.add_subcommand("ablate", "train and score the ablation matrix");
  ab->add_option("--data", data, "dataset path")->required();
  ab->add_option("--config", config_path, "base config file");
  ab->add_option("--set", overrides, "override one base config key (key=value), repeatable");
  ab->add_option("--seeds", seeds, "comma-separated seed list")->capture_default_str();
  ab->add_option("--out", metrics_out, "output table (tab-separated)")->required();

  std::vector<std::string> argv_store{"gcmae"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const auto ds = generate_sbm(spec);
      save_dataset(ds, gen_out);
      out << "N=" << ds.num_nodes() << " m=" << ds.graph.num_edges() << " K=" << ds.num_classes() << '\n';
      return kExitOk;
    }

    if (tr->parsed()) {
      const std::string started = utc_now();
      const TrainConfig config = resolve_config(config_path, overrides);
      const std::string data_bytes = read_file(data);
      const Dataset ds = load_dataset(data, split_seed);
      fs::create_directories(out_dir);
      const std::string ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
      const std::string trace = (fs::path(out_dir) / "trace.tsv").string();
      const std::string manifest = (fs::path(out_dir) / "manifest.json").string();
      OutputGuard guard{{ckpt, trace, manifest}};
      TrainResult result;
      {
        std::ofstream trace_out(trace, std::ios::binary);
        if (!trace_out) throw DataError("cannot write '" + trace + "'");
        result = run_training(ds, config, &err, &trace_out);
      }
      const std::uint64_t hash = config_hash(config);
      save_checkpoint(result.params, hash, ckpt);

      std::string command = "gcmae";
      for (const auto& a : args) command += " " + a;
      json m;
      m["version"] = kVersionTag;
      m["command"] = command;
      m["config"] = serialize_config(config);
      m["config_hash"] = hash_hex(hash);
      m["dataset"] = data;
      m["dataset_hash"] = hash_hex(fnv1a(data_bytes));
      m["split_seed"] = split_seed;
      m["started"] = started;
      m["finished"] = utc_now();
      m["outputs"] = {{"checkpoint", ckpt}, {"trace", trace}, {"manifest", manifest}};
      write_file(manifest, m.dump(2) + "\n");
      guard.released = true;
      out << "trained " << config.epochs << " epochs; final total " << config_detail::format_double(
          result.trace.epochs.empty() ? 0.0 : result.trace.epochs.back().losses.total) << '\n';
      return kExitOk;
    }

    if (ev->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      const Dataset ds = load_dataset(data, 0);
      std::optional<TrainConfig> config;
      if (!config_path.empty() || !overrides.empty()) {
        config = resolve_config(config_path, overrides);
        if (config_hash(*config) != ck.config_hash) {
          throw ConfigError("config hash " + hash_hex(config_hash(*config)) + " differs from checkpoint's " +
                            hash_hex(ck.config_hash));
        }
        require_compatible(ck.params, model_shape(*config, ds.feature_dim()));
      }
      if (ck.params.shape.input_dim != ds.feature_dim()) {
        throw ShapeError("checkpoint expects " + std::to_string(ck.params.shape.input_dim) +
                         " features, dataset has " + std::to_string(ds.feature_dim()));
      }
      const auto h = embed(ck.params, normalize(ds.graph), ds.features);

      if (task == "pca") {
        std::ofstream csv(metrics_out);
        if (!csv) throw DataError("cannot write '" + metrics_out + "'");
        write_pca_csv(csv, pca_2d(h), ds.labels);
        return kExitOk;
      }

      const auto seed_list = parse_seeds(seeds);
      std::vector<Metrics> runs;
      for (std::uint64_t seed : seed_list) {
        Metrics m;
        if (task == "classify") {
          const auto& labels = require_labels(ds, task);
          m.accuracy = linear_probe(h, labels, make_split(ds.num_nodes(), ds.labels, seed));
        } else if (task == "cluster") {
          const auto& labels = require_labels(ds, task);
          Rng rng = make_rng(seed, Stream::kmeans, {});
          const auto km = kmeans_cluster(h, ds.num_classes(), rng);
          const auto s = nmi_ari(km.labels, labels);
          m.nmi = s.nmi;
          m.ari = s.ari;
        } else if (task == "probe") {
          Rng rng = make_rng(seed, Stream::probe, {});
          m.probe = similarity_probe(h, ds.graph, probe_samples, probe_k, rng);
        } else {
          if (!config) throw ConfigError("task 'linkpred' retrains on the train-edge graph and needs --config");
          const auto split = make_edge_split(ds.graph, seed);
          Dataset held_out = ds;
          held_out.graph = split.message_graph;
          const auto result = train(held_out, *config);
          const auto s = link_prediction_eval(result.params, ds, split);
          m.auc = s.auc;
          m.ap = s.ap;
        }
        runs.push_back(m);
      }

      std::ostringstream lines;
      for (std::size_t i = 0; i < runs.size(); ++i) {
        json j;
        j["task"] = task;
        j["seed"] = seed_list[i];
        const json values = metrics_json(runs[i]);
        for (auto& [k, v] : values.items()) j[k] = v;
        j["config_hash"] = hash_hex(ck.config_hash);
        lines << j.dump() << '\n';
      }
      json agg;
      agg["task"] = task;
      agg["aggregate"] = true;
      agg["seeds"] = seed_list.size();
      for (const auto& [name, s] : aggregate(runs)) agg[name] = {{"mean", s.mean}, {"std", s.std}};
      agg["config_hash"] = hash_hex(ck.config_hash);
      lines << agg.dump() << '\n';
      write_file(metrics_out, lines.str());
      out << lines.str();
      return kExitOk;
    }

    if (ab->parsed()) {
      const TrainConfig base = resolve_config(config_path, overrides);
      const Dataset ds = load_dataset(data, 0);
      require_labels(ds, "ablate");
      const auto seed_list = parse_seeds(seeds);
      auto rows = ablation_rows(base);
      for (auto& r : rows) {
        validate(r.config);
        for (std::uint64_t seed : seed_list) {
          r.accuracy.push_back(ablation_accuracy(ds, r.config, seed));
          err << r.name << " seed " << seed << " acc " << r.accuracy.back() << '\n';
        }
      }
      const std::string table = ablation_table(rows);
      write_file(metrics_out, table);
      out << table;
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace gcmae
