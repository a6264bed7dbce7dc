// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gcmae/error.hpp"

namespace gcmae {

/// Which encoders exist and which branches train them.
enum class EncoderMode { shared, mae_only, contrastive_only, fusion };

inline std::string to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::shared: return "shared";
    case EncoderMode::mae_only: return "mae_only";
    case EncoderMode::contrastive_only: return "contrastive_only";
    case EncoderMode::fusion: return "fusion";
  }
  return "shared";
}

inline EncoderMode parse_encoder_mode(std::string_view s) {
  if (s == "shared") return EncoderMode::shared;
  if (s == "mae_only") return EncoderMode::mae_only;
  if (s == "contrastive_only") return EncoderMode::contrastive_only;
  if (s == "fusion") return EncoderMode::fusion;
  throw ConfigError("unknown encoder_mode '" + std::string(s) + "'");
}

/// Objective weights and shape parameters of the individual terms.
struct LossWeights {
  double alpha = 1.0;    // contrastive
  double lambda = 1.0;   // adjacency reconstruction
  double mu = 1.0;       // variance discrimination
  double gamma = 2.0;    // SCE exponent, > 1
  double tau = 0.5;      // InfoNCE temperature, > 0
  double epsilon = 1e-4; // variance floor, > 0

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct TrainConfig {
  double p_mask = 0.6;
  double p_drop = 0.3;
  double lr = 0.001;
  double weight_decay = 0.0001;
  std::uint64_t epochs = 300;
  LossWeights weights;
  std::uint64_t hidden_dim = 512;
  std::uint64_t proj_dim = 0;  // 0 => hidden_dim
  std::uint64_t depth = 2;
  EncoderMode encoder_mode = EncoderMode::shared;
  std::uint64_t block_size = 512;
  std::uint64_t seed = 0;
  bool remask_decoder = false;
  bool variance_literal = false;
  std::uint64_t probe_every = 10;  // 0 disables the per-epoch probe
  std::uint64_t probe_sample_size = 64;
  std::uint64_t probe_k = 5;
  bool trace_timing = false;
  bool debug_validation = false;

  std::uint64_t projection_dim() const { return proj_dim == 0 ? hidden_dim : proj_dim; }

  /// SCE weight implied by the mode: the contrastive-only encoder has no decoder.
  double sce_weight() const { return encoder_mode == EncoderMode::contrastive_only ? 0.0 : 1.0; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace config_detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ConfigError("cannot format value");
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw ConfigError("config key '" + key + "': bad real '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("config key '" + key + "': bad non-negative integer '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw ConfigError("config key '" + key + "': bad boolean '" + s + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto real = [&f](std::string key, double TrainConfig::*member) {
      f.push_back({key, [member](const TrainConfig& c) { return format_double(c.*member); },
                   [member, key](TrainConfig& c, const std::string& v) {
                     c.*member = parse_double(key, v);
                   }});
    };
    auto weight = [&f](std::string key, double LossWeights::*member) {
      f.push_back({key,
                   [member](const TrainConfig& c) { return format_double(c.weights.*member); },
                   [member, key](TrainConfig& c, const std::string& v) {
                     c.weights.*member = parse_double(key, v);
                   }});
    };
    auto count = [&f](std::string key, std::uint64_t TrainConfig::*member) {
      f.push_back({key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
                   [member, key](TrainConfig& c, const std::string& v) {
                     c.*member = parse_uint(key, v);
                   }});
    };
    auto flag = [&f](std::string key, bool TrainConfig::*member) {
      f.push_back({key, [member](const TrainConfig& c) { return std::string(c.*member ? "1" : "0"); },
                   [member, key](TrainConfig& c, const std::string& v) {
                     c.*member = parse_bool(key, v);
                   }});
    };
    real("p_mask", &TrainConfig::p_mask);
    real("p_drop", &TrainConfig::p_drop);
    real("lr", &TrainConfig::lr);
    real("weight_decay", &TrainConfig::weight_decay);
    count("epochs", &TrainConfig::epochs);
    weight("alpha", &LossWeights::alpha);
    weight("lambda", &LossWeights::lambda);
    weight("mu", &LossWeights::mu);
    weight("gamma", &LossWeights::gamma);
    weight("tau", &LossWeights::tau);
    weight("epsilon", &LossWeights::epsilon);
    count("hidden_dim", &TrainConfig::hidden_dim);
    count("proj_dim", &TrainConfig::proj_dim);
    count("depth", &TrainConfig::depth);
    f.push_back({"encoder_mode", [](const TrainConfig& c) { return to_string(c.encoder_mode); },
                 [](TrainConfig& c, const std::string& v) {
                   c.encoder_mode = parse_encoder_mode(v);
                 }});
    count("block_size", &TrainConfig::block_size);
    count("seed", &TrainConfig::seed);
    flag("remask_decoder", &TrainConfig::remask_decoder);
    flag("variance_literal", &TrainConfig::variance_literal);
    count("probe_every", &TrainConfig::probe_every);
    count("probe_sample_size", &TrainConfig::probe_sample_size);
    count("probe_k", &TrainConfig::probe_k);
    flag("trace_timing", &TrainConfig::trace_timing);
    flag("debug_validation", &TrainConfig::debug_validation);
    return f;
  }();
  return table;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace config_detail

/// Sets one key; unknown keys are errors.
inline void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : config_detail::fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Applies a "key=value" override.
inline void apply_override(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_config_value(config, config_detail::trim(assignment.substr(0, eq)),
                   config_detail::trim(assignment.substr(eq + 1)));
}

/// One "key=value" line per field in a fixed order; reals use the shortest
/// representation that round-trips.
inline std::string serialize_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : config_detail::fields()) out += f.key + "=" + f.get(config) + "\n";
  return out;
}

/// Parses key=value text on top of the defaults. Blank lines and lines
/// starting with '#' are ignored.
inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = config_detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      apply_override(base, t);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// FNV-1a over the canonical serialization.
inline std::uint64_t config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Range checks plus mode/weight consistency.
inline void validate(const TrainConfig& c) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  prob(c.p_mask, "p_mask");
  prob(c.p_drop, "p_drop");
  const auto& w = c.weights;
  if (w.alpha < 0.0 || w.lambda < 0.0 || w.mu < 0.0) {
    throw ConfigError("alpha, lambda and mu must be non-negative");
  }
  if (!(w.gamma > 1.0)) throw ConfigError("gamma must be > 1");
  if (!(w.tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(w.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(c.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (c.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (c.hidden_dim == 0 || c.depth == 0) throw ConfigError("hidden_dim and depth must be >= 1");
  if (c.block_size < 2) throw ConfigError("block_size must be >= 2");
  if (c.probe_k == 0) throw ConfigError("probe_k must be >= 1");
  if (c.encoder_mode == EncoderMode::mae_only && w.alpha != 0.0) {
    throw ConfigError("encoder_mode=mae_only has no contrastive branch; alpha must be 0");
  }
  if (c.encoder_mode == EncoderMode::contrastive_only && w.lambda != 0.0) {
    throw ConfigError("encoder_mode=contrastive_only has no decoder; lambda must be 0");
  }
  if (c.sce_weight() != 0.0 && c.p_mask == 0.0) {
    throw ConfigError("feature reconstruction needs p_mask > 0");
  }
}

}  // namespace gcmae
