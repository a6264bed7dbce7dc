// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gcmae/augment.hpp"
#include "gcmae/config.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/losses.hpp"
#include "gcmae/model.hpp"
#include "gcmae/optim.hpp"

namespace gcmae {

struct EpochRecord {
  std::uint64_t epoch = 0;  // 1-based
  LossBreakdown losses;
  std::optional<double> probe;
  std::optional<double> seconds;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

namespace trace_detail {
inline std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

inline double parse_num(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError("trace: bad number '" + s + "'");
  return v;
}
}  // namespace trace_detail

/// Tab-separated: epoch, sce, contrastive, mse, bce, dist, variance, total,
/// probe or "-", seconds or "-".
inline std::string serialize_trace(const TrainTrace& trace) {
  using trace_detail::num;
  std::string out;
  for (const auto& e : trace.epochs) {
    const auto& l = e.losses;
    out += std::to_string(e.epoch) + '\t' + num(l.sce) + '\t' + num(l.contrastive) + '\t' + num(l.mse) +
           '\t' + num(l.bce) + '\t' + num(l.dist) + '\t' + num(l.variance) + '\t' + num(l.total) + '\t' +
           (e.probe ? num(*e.probe) : "-") + '\t' + (e.seconds ? num(*e.seconds) : "-") + '\n';
  }
  return out;
}

inline TrainTrace parse_trace(const std::string& text) {
  using trace_detail::parse_num;
  TrainTrace trace;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, '\t')) f.push_back(tok);
    if (f.size() != 10) throw DataError("trace: expected 10 fields, got " + std::to_string(f.size()));
    EpochRecord e;
    e.epoch = static_cast<std::uint64_t>(parse_num(f[0]));
    e.losses.sce = parse_num(f[1]);
    e.losses.contrastive = parse_num(f[2]);
    e.losses.mse = parse_num(f[3]);
    e.losses.bce = parse_num(f[4]);
    e.losses.dist = parse_num(f[5]);
    e.losses.structure_total = e.losses.mse + e.losses.bce + e.losses.dist;
    e.losses.variance = parse_num(f[6]);
    e.losses.total = parse_num(f[7]);
    if (f[8] != "-") e.probe = parse_num(f[8]);
    if (f[9] != "-") e.seconds = parse_num(f[9]);
    trace.epochs.push_back(e);
  }
  return trace;
}

/// Mean cosine similarity between a sampled node's embedding and the mean
/// embedding of its exactly-k-hop set. Nodes with no k-hop neighbours are
/// skipped; throws when every sampled node was skipped.
template <class T>
double similarity_probe(const Tensor<T>& embeddings, const SparseGraph& graph,
                        std::size_t sample_size, std::size_t k, Rng& rng) {
  const std::size_t n = graph.num_nodes();
  if (embeddings.rows() != n) throw ShapeError("similarity_probe: embedding rows != nodes");
  const std::size_t d = embeddings.cols();
  const auto nodes = sample_without_replacement(n, std::min(sample_size, n), rng);
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> mean(d);
  for (NodeId i : nodes) {
    const auto far = khop_neighbors(graph, i, k);
    if (far.empty()) continue;
    std::fill(mean.begin(), mean.end(), 0.0);
    for (NodeId j : far) {
      const auto r = embeddings.row(j);
      for (std::size_t c = 0; c < d; ++c) mean[c] += static_cast<double>(r[c]);
    }
    const auto hi = embeddings.row(i);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double m = mean[c] / static_cast<double>(far.size());
      dot += static_cast<double>(hi[c]) * m;
      na += static_cast<double>(hi[c]) * hi[c];
      nb += m * m;
    }
    total += dot / std::max(std::sqrt(na) * std::sqrt(nb), kCosineFloor);
    ++used;
  }
  if (used == 0) {
    throw NumericError("similarity_probe: no sampled node has a " + std::to_string(k) +
                       "-hop neighbourhood");
  }
  return total / static_cast<double>(used);
}

/// Probe on the model's frozen embedding of the clean dataset.
template <class T>
double similarity_probe(const ModelParams<T>& params, const Dataset& dataset, std::size_t sample_size,
                        std::size_t k, Rng& rng) {
  const auto h = embed(params, normalize(dataset.graph), dataset.features);
  return similarity_probe(h, dataset.graph, sample_size, k, rng);
}

struct TrainResult {
  ModelParams<float> params;
  TrainTrace trace;
};

/// Called after every completed epoch.
using EpochCallback = std::function<void(const EpochRecord&, const ModelParams<float>&)>;

inline std::uint64_t probe_seed(const TrainConfig& c, std::uint64_t epoch) {
  return derive_seed(c.seed, Stream::probe, {epoch});
}

/// Full-batch training: each epoch draws both views, runs the forward pass,
/// sums the weighted objective, backpropagates and takes one Adam step.
inline TrainResult train(const Dataset& dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
  validate(config);
  const bool previous_validation = debug_validation_flag().load();
  set_debug_validation(config.debug_validation);
  struct Restore {
    bool v;
    ~Restore() { set_debug_validation(v); }
  } restore{previous_validation};

  const std::size_t n = dataset.num_nodes();
  const auto& x = dataset.features;
  TrainResult result{init_params<float>(config, dataset.feature_dim()), {}};
  auto& params = result.params;
  const EncoderMode mode = config.encoder_mode;
  const auto& w = config.weights;
  const AdamOptions adam{config.lr, config.weight_decay};
  const NormalizedAdjacency adj = normalize(dataset.graph);
  const std::size_t block = std::min<std::size_t>(n, config.block_size);

  for (std::uint64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto [mask, drop] = draw_plans(config, n, epoch);
    const Tensor<float> x_masked = mask_features(x, mask);
    const NormalizedAdjacency drop_adj =
        has_projectors(mode) ? normalize(drop_nodes(dataset.graph, drop)) : NormalizedAdjacency{};

    Tape<float> tape;
    Objective<float> objective;
    {
      typename Tape<float>::Recording recording(tape);
      const Views<float> views{adj, drop_adj, x, x_masked, mask, config.remask_decoder};
      const auto out = forward(params, views);

      LossTerms<float> terms;
      if (config.sce_weight() != 0.0) terms.sce = sce_loss(x, *out.z, mask.masked_nodes, w.gamma);
      if (w.alpha != 0.0 && out.u) terms.contrastive = infonce_loss(*out.u, *out.v, w.tau);
      if (w.lambda != 0.0 && out.z) {
        Rng rng = make_rng(config.seed, Stream::block, {epoch});
        const auto nodes = sample_block(n, block, rng);
        terms.structure = adj_recon_losses(*out.z, dataset.graph, nodes);
      }
      if (w.mu != 0.0) terms.variance = variance_loss(out.h1, w.epsilon, config.variance_literal);
      objective = total_loss(terms, w, config.sce_weight());
    }

    const auto& b = objective.breakdown;
    for (double v : {b.sce, b.contrastive, b.mse, b.bce, b.dist, b.variance, b.total}) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ": sce=" +
                           trace_detail::num(b.sce) + " contrastive=" + trace_detail::num(b.contrastive) +
                           " mse=" + trace_detail::num(b.mse) + " bce=" + trace_detail::num(b.bce) +
                           " dist=" + trace_detail::num(b.dist) + " variance=" +
                           trace_detail::num(b.variance));
      }
    }
    const auto grads = tape.backward(objective.total);
    adam_step(params, grads, adam);

    EpochRecord record;
    record.epoch = epoch;
    record.losses = b;
    if (config.probe_every != 0 && epoch % config.probe_every == 0) {
      Rng rng(probe_seed(config, epoch));
      try {
        record.probe = similarity_probe(params, dataset, config.probe_sample_size, config.probe_k, rng);
      } catch (const NumericError&) {
        // Graph too small for the probe distance; the trace shows "-".
      }
    }
    if (config.trace_timing) {
      record.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    result.trace.epochs.push_back(record);
    if (on_epoch) on_epoch(record, params);
  }
  return result;
}

}  // namespace gcmae
