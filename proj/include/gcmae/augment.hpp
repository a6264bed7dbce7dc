// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gcmae/config.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/ops.hpp"
#include "gcmae/rng.hpp"

namespace gcmae {

/// Nodes whose feature rows are zeroed in the reconstruction view.
struct MaskPlan {
  std::vector<NodeId> masked_nodes;  // ascending
  double p_mask = 0.0;
  std::uint64_t stream_seed = 0;
};

/// Nodes whose incident edges are removed in the contrastive view. Indices
/// and feature rows stay in place so row i of both views is node i.
struct DropPlan {
  std::vector<NodeId> dropped_nodes;  // ascending
  double p_drop = 0.0;
  std::uint64_t stream_seed = 0;
};

/// Independent Bernoulli(p) draw per node.
inline std::vector<NodeId> bernoulli_nodes(std::size_t n, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probability outside [0, 1]");
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (bernoulli(rng, p)) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

inline MaskPlan draw_mask_plan(std::size_t n, double p_mask, std::uint64_t seed) {
  Rng rng(seed);
  return {bernoulli_nodes(n, p_mask, rng), p_mask, seed};
}

inline DropPlan draw_drop_plan(std::size_t n, double p_drop, std::uint64_t seed) {
  Rng rng(seed);
  return {bernoulli_nodes(n, p_drop, rng), p_drop, seed};
}

/// Fresh plans for one epoch; a pure function of (config.seed, epoch).
inline std::pair<MaskPlan, DropPlan> draw_plans(const TrainConfig& config, std::size_t num_nodes,
                                                std::uint64_t epoch) {
  return {draw_mask_plan(num_nodes, config.p_mask, derive_seed(config.seed, Stream::mask, {epoch})),
          draw_drop_plan(num_nodes, config.p_drop, derive_seed(config.seed, Stream::drop, {epoch}))};
}

/// X with the masked rows set to zero.
template <class T>
Tensor<T> mask_features(const Tensor<T>& x, const MaskPlan& plan) {
  return masked_fill_rows(x, std::span<const NodeId>(plan.masked_nodes), T{0});
}

/// Removes every edge with an endpoint in the dropped set; N is unchanged.
inline SparseGraph drop_nodes(const SparseGraph& graph, const DropPlan& plan) {
  std::vector<std::uint8_t> dropped(graph.num_nodes(), 0);
  for (NodeId i : plan.dropped_nodes) {
    if (i >= graph.num_nodes()) throw DataError("drop plan node out of range");
    dropped[i] = 1;
  }
  std::vector<Edge> kept;
  kept.reserve(graph.num_arcs());
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    if (dropped[i]) continue;
    for (NodeId j : graph.neighbors(i)) {
      if (!dropped[j]) kept.push_back({static_cast<NodeId>(i), j});
    }
  }
  // Arcs are already both directions for undirected graphs.
  return SparseGraph::from_edges(graph.num_nodes(), kept, graph.is_undirected());
}

}  // namespace gcmae
