// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gcmae/error.hpp"
#include "gcmae/rng.hpp"
#include "gcmae/tensor.hpp"

namespace gcmae {

using NodeId = std::uint32_t;

struct Edge {
  NodeId u;
  NodeId v;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Immutable CSR adjacency in canonical form: rows sorted, no duplicates,
/// no self-loops, and symmetric when undirected.
class SparseGraph {
 public:
  SparseGraph() : row_offsets_{0} {}

  /// Canonicalizes an arbitrary edge list. Self-loops are dropped and
  /// duplicates merged; undirected graphs store both arcs for every edge.
  static SparseGraph from_edges(std::size_t num_nodes, std::span<const Edge> edges,
                                bool undirected) {
    std::vector<Edge> arcs;
    arcs.reserve(undirected ? 2 * edges.size() : edges.size());
    for (const auto& e : edges) {
      if (e.u >= num_nodes || e.v >= num_nodes) {
        throw DataError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                        ") out of range for " + std::to_string(num_nodes) + " nodes");
      }
      if (e.u == e.v) continue;
      arcs.push_back(e);
      if (undirected) arcs.push_back({e.v, e.u});
    }
    std::sort(arcs.begin(), arcs.end());
    arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

    SparseGraph g;
    g.num_nodes_ = num_nodes;
    g.undirected_ = undirected;
    g.row_offsets_.assign(num_nodes + 1, 0);
    g.col_indices_.reserve(arcs.size());
    for (const auto& a : arcs) {
      ++g.row_offsets_[a.u + 1];
      g.col_indices_.push_back(a.v);
    }
    for (std::size_t i = 0; i < num_nodes; ++i) g.row_offsets_[i + 1] += g.row_offsets_[i];
    return g;
  }

  std::size_t num_nodes() const { return num_nodes_; }
  /// Stored directed arcs; an undirected edge counts twice.
  std::size_t num_arcs() const { return col_indices_.size(); }
  /// Undirected edge count (arcs / 2) or arc count for directed graphs.
  std::size_t num_edges() const { return undirected_ ? num_arcs() / 2 : num_arcs(); }
  bool is_undirected() const { return undirected_; }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const NodeId> col_indices() const { return col_indices_; }

  std::span<const NodeId> neighbors(std::size_t i) const {
    return {col_indices_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
  }
  std::size_t degree(std::size_t i) const { return row_offsets_[i + 1] - row_offsets_[i]; }

  bool has_edge(std::size_t i, std::size_t j) const {
    const auto n = neighbors(i);
    return std::binary_search(n.begin(), n.end(), static_cast<NodeId>(j));
  }

  /// Each undirected edge once as (u < v); every arc for directed graphs.
  std::vector<Edge> edge_list() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (std::size_t i = 0; i < num_nodes_; ++i) {
      for (NodeId j : neighbors(i)) {
        if (!undirected_ || i < j) out.push_back({static_cast<NodeId>(i), j});
      }
    }
    return out;
  }

  friend bool operator==(const SparseGraph& a, const SparseGraph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.undirected_ == b.undirected_ &&
           a.row_offsets_ == b.row_offsets_ && a.col_indices_ == b.col_indices_;
  }

 private:
  std::size_t num_nodes_ = 0;
  bool undirected_ = true;
  std::vector<std::size_t> row_offsets_;
  std::vector<NodeId> col_indices_;
};

/// D^-1/2 (A + I) D^-1/2 in CSR form; the diagonal is stored in sorted position.
class NormalizedAdjacency {
 public:
  std::size_t num_nodes() const { return row_offsets_.size() - 1; }
  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const NodeId> col_indices() const { return col_indices_; }
  std::span<const float> weights() const { return weights_; }

  /// Weight of (i, j), zero if absent.
  float weight(std::size_t i, std::size_t j) const {
    const auto b = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i]);
    const auto e = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i + 1]);
    const auto it = std::lower_bound(b, e, static_cast<NodeId>(j));
    if (it == e || *it != j) return 0.0F;
    return weights_[static_cast<std::size_t>(it - col_indices_.begin())];
  }

  friend NormalizedAdjacency normalize(const SparseGraph& graph);

 private:
  std::vector<std::size_t> row_offsets_{0};
  std::vector<NodeId> col_indices_;
  std::vector<float> weights_;
};

inline NormalizedAdjacency normalize(const SparseGraph& graph) {
  const std::size_t n = graph.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(graph.degree(i)) + 1.0);
  }
  NormalizedAdjacency adj;
  adj.row_offsets_.assign(n + 1, 0);
  adj.col_indices_.reserve(graph.num_arcs() + n);
  adj.weights_.reserve(graph.num_arcs() + n);
  for (std::size_t i = 0; i < n; ++i) {
    bool diagonal_done = false;
    auto emit = [&](std::size_t j) {
      adj.col_indices_.push_back(static_cast<NodeId>(j));
      adj.weights_.push_back(static_cast<float>(inv_sqrt[i] * inv_sqrt[j]));
    };
    for (NodeId j : graph.neighbors(i)) {
      if (!diagonal_done && j > i) {
        emit(i);
        diagonal_done = true;
      }
      emit(j);
    }
    if (!diagonal_done) emit(i);
    adj.row_offsets_[i + 1] = adj.col_indices_.size();
  }
  return adj;
}

enum class SplitTag : std::uint8_t { train, val, test };

/// Graph, features X (N x d), optional labels and a train/val/test tag per node.
struct Dataset {
  SparseGraph graph;
  Tensor<float> features;
  std::optional<std::vector<int>> labels;
  std::vector<SplitTag> split;

  std::size_t num_nodes() const { return graph.num_nodes(); }
  std::size_t feature_dim() const { return features.cols(); }

  int num_classes() const {
    if (!labels || labels->empty()) return 0;
    return *std::max_element(labels->begin(), labels->end()) + 1;
  }

  std::vector<NodeId> nodes_with(SplitTag tag) const {
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == tag) out.push_back(static_cast<NodeId>(i));
    }
    return out;
  }
};

/// Stratified split, per class: first round(train_frac * n_c) nodes of a
/// shuffled class list go to train, the next round(val_frac * n_c) to val.
/// Without labels the whole node set is treated as one class.
inline std::vector<SplitTag> make_split(std::size_t num_nodes,
                                        const std::optional<std::vector<int>>& labels,
                                        std::uint64_t seed, double train_frac = 0.1,
                                        double val_frac = 0.1) {
  std::vector<std::vector<NodeId>> groups;
  if (labels) {
    for (std::size_t i = 0; i < num_nodes; ++i) {
      const auto c = static_cast<std::size_t>((*labels)[i]);
      if (groups.size() <= c) groups.resize(c + 1);
      groups[c].push_back(static_cast<NodeId>(i));
    }
  } else {
    groups.emplace_back(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) groups[0][i] = static_cast<NodeId>(i);
  }
  Rng rng = make_rng(seed, Stream::split);
  std::vector<SplitTag> split(num_nodes, SplitTag::test);
  for (auto& g : groups) {
    shuffle(std::span<NodeId>(g), rng);
    const auto n = static_cast<double>(g.size());
    const auto n_train = static_cast<std::size_t>(std::lround(train_frac * n));
    const auto n_val = static_cast<std::size_t>(std::lround(val_frac * n));
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (k < n_train) {
        split[g[k]] = SplitTag::train;
      } else if (k < n_train + n_val) {
        split[g[k]] = SplitTag::val;
      }
    }
  }
  return split;
}

/// Planted-partition generator parameters.
struct SbmSpec {
  std::size_t blocks = 3;
  std::size_t nodes_per_block = 100;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  double feature_separation = 1.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (blocks == 0 || nodes_per_block == 0) throw ConfigError("sbm: empty block structure");
    if (!(p_out >= 0.0 && p_in <= 1.0 && p_out <= p_in)) {
      throw ConfigError("sbm: require 0 <= p_out <= p_in <= 1");
    }
    // p_in == p_out == 0 stays legal as the empty-graph degenerate case.
    if (p_out == p_in && p_in > 0.0) throw ConfigError("sbm: require p_out < p_in");
    if (feature_dim < blocks) throw ConfigError("sbm: feature_dim must be >= blocks");
    if (noise_sigma < 0.0) throw ConfigError("sbm: noise_sigma must be non-negative");
  }
};

/// Node i belongs to block i / nodes_per_block. Features are
/// separation * e_block + N(0, sigma^2) noise.
inline Dataset generate_sbm(const SbmSpec& spec) {
  spec.validate();
  const std::size_t n = spec.blocks * spec.nodes_per_block;

  Rng edge_rng = make_rng(spec.seed, Stream::sbm_edges);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = i / spec.nodes_per_block == j / spec.nodes_per_block;
      if (bernoulli(edge_rng, same ? spec.p_in : spec.p_out)) {
        edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
      }
    }
  }

  Rng feature_rng = make_rng(spec.seed, Stream::sbm_features);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<float> x(n * spec.feature_dim);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t block = i / spec.nodes_per_block;
    labels[i] = static_cast<int>(block);
    for (std::size_t c = 0; c < spec.feature_dim; ++c) {
      const double mean = c == block ? spec.feature_separation : 0.0;
      x[i * spec.feature_dim + c] =
          static_cast<float>(mean + spec.noise_sigma * noise(feature_rng));
    }
  }

  Dataset d;
  d.graph = SparseGraph::from_edges(n, edges, true);
  d.features = Tensor<float>(n, spec.feature_dim, std::move(x));
  d.labels = std::move(labels);
  d.split = make_split(n, d.labels, spec.seed);
  return d;
}

/// Shortest-path hop counts from `source`; unreachable nodes get SIZE_MAX.
inline std::vector<std::size_t> bfs_distances(const SparseGraph& graph, std::size_t source) {
  constexpr auto unreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(graph.num_nodes(), unreached);
  std::queue<std::size_t> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop();
    for (NodeId v : graph.neighbors(u)) {
      if (dist[v] == unreached) {
        dist[v] = dist[u] + 1;
        frontier.push(v);
      }
    }
  }
  return dist;
}

/// Nodes at shortest-path distance exactly k from `node`, ascending.
inline std::vector<NodeId> khop_neighbors(const SparseGraph& graph, std::size_t node,
                                          std::size_t k) {
  if (k == 0) throw ConfigError("khop_neighbors: k must be >= 1");
  const auto dist = bfs_distances(graph, node);
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] == k) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format:
//   NODES <N> <d>
//   <id>: <d reals>          (N lines, ids in order)
//   EDGES <m>
//   <u> <v>                  (m lines)
//   [UNDIRECTED]
//   [LABELS
//    <id> <class>            (N lines)]

namespace detail {
[[noreturn]] inline void parse_fail(std::size_t line, const std::string& what) {
  throw DataError("dataset line " + std::to_string(line) + ": " + what);
}

inline bool next_content_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) return true;
  }
  return false;
}
}  // namespace detail

inline Dataset read_dataset(std::istream& in, std::uint64_t split_seed = 0) {
  std::string line;
  std::size_t lineno = 0;
  if (!detail::next_content_line(in, line, lineno)) detail::parse_fail(lineno, "empty file");

  std::istringstream header(line);
  std::string tag;
  long long n_raw = -1;
  long long d_raw = -1;
  if (!(header >> tag >> n_raw >> d_raw) || tag != "NODES" || n_raw < 0 || d_raw < 0) {
    detail::parse_fail(lineno, "malformed header, expected 'NODES <N> <d>'");
  }
  const auto n = static_cast<std::size_t>(n_raw);
  const auto d = static_cast<std::size_t>(d_raw);

  std::vector<float> x;
  x.reserve(n * d);
  std::size_t rows = 0;
  bool have_pending = false;
  while (rows < n) {
    if (!detail::next_content_line(in, line, lineno)) break;
    if (line.rfind("EDGES", 0) == 0) {
      have_pending = true;
      break;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) detail::parse_fail(lineno, "expected '<id>: <values>'");
    long long id = -1;
    try {
      id = std::stoll(line.substr(0, colon));
    } catch (const std::exception&) {
      detail::parse_fail(lineno, "bad node id");
    }
    if (id != static_cast<long long>(rows)) {
      detail::parse_fail(lineno, "node ids must appear in order, expected " +
                                     std::to_string(rows));
    }
    std::istringstream vals(line.substr(colon + 1));
    std::string tok;
    std::size_t count = 0;
    while (vals >> tok) {
      try {
        x.push_back(std::stof(tok));
      } catch (const std::exception&) {
        detail::parse_fail(lineno, "bad feature value '" + tok + "'");
      }
      ++count;
    }
    if (count != d) {
      detail::parse_fail(lineno, "expected " + std::to_string(d) + " feature values, got " +
                                     std::to_string(count));
    }
    ++rows;
  }
  if (rows != n) {
    throw DataError("feature row count mismatch: header declares " + std::to_string(n) +
                    ", file provides " + std::to_string(rows));
  }

  if (!have_pending && !detail::next_content_line(in, line, lineno)) {
    detail::parse_fail(lineno, "missing EDGES section");
  }
  std::istringstream eh(line);
  long long m_raw = -1;
  if (!(eh >> tag >> m_raw) || tag != "EDGES" || m_raw < 0) {
    detail::parse_fail(lineno, "malformed edge header, expected 'EDGES <m>'");
  }
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(m_raw));
  for (long long k = 0; k < m_raw; ++k) {
    if (!detail::next_content_line(in, line, lineno)) detail::parse_fail(lineno, "missing edges");
    std::istringstream es(line);
    long long u = -1;
    long long v = -1;
    if (!(es >> u >> v)) detail::parse_fail(lineno, "expected '<u> <v>'");
    if (u < 0 || v < 0 || u >= n_raw || v >= n_raw) {
      detail::parse_fail(lineno, "edge index out of range");
    }
    edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
  }

  bool undirected = false;
  std::optional<std::vector<int>> labels;
  while (detail::next_content_line(in, line, lineno)) {
    std::istringstream ts(line);
    ts >> tag;
    if (tag == "UNDIRECTED") {
      undirected = true;
    } else if (tag == "LABELS") {
      std::vector<int> lab(n, -1);
      for (std::size_t k = 0; k < n; ++k) {
        if (!detail::next_content_line(in, line, lineno)) {
          detail::parse_fail(lineno, "missing label rows");
        }
        std::istringstream ls(line);
        long long id = -1;
        long long c = -1;
        if (!(ls >> id >> c) || id != static_cast<long long>(k) || c < 0) {
          detail::parse_fail(lineno, "expected '<id> <class>' in node order");
        }
        lab[k] = static_cast<int>(c);
      }
      labels = std::move(lab);
    } else {
      detail::parse_fail(lineno, "unexpected section '" + tag + "'");
    }
  }

  Dataset ds;
  ds.graph = SparseGraph::from_edges(n, edges, undirected);
  ds.features = Tensor<float>(n, d, std::move(x));
  ds.labels = std::move(labels);
  ds.split = make_split(n, ds.labels, split_seed);
  return ds;
}

inline Dataset load_dataset(const std::string& path, std::uint64_t split_seed = 0) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset(in, split_seed);
}

inline void write_dataset(const Dataset& ds, std::ostream& out) {
  const std::size_t n = ds.num_nodes();
  const std::size_t d = ds.feature_dim();
  out << "NODES " << n << ' ' << d << '\n';
  out.precision(std::numeric_limits<float>::max_digits10);
  for (std::size_t i = 0; i < n; ++i) {
    out << i << ':';
    for (float v : ds.features.row(i)) out << ' ' << v;
    out << '\n';
  }
  const auto edges = ds.graph.edge_list();
  out << "EDGES " << edges.size() << '\n';
  for (const auto& e : edges) out << e.u << ' ' << e.v << '\n';
  if (ds.graph.is_undirected()) out << "UNDIRECTED\n";
  if (ds.labels) {
    out << "LABELS\n";
    for (std::size_t i = 0; i < n; ++i) out << i << ' ' << (*ds.labels)[i] << '\n';
  }
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  write_dataset(ds, out);
  if (!out) throw DataError("failed writing dataset '" + path + "'");
}

}  // namespace gcmae
