// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "gcmae/gcmae.hpp"

using namespace gcmae;

namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

SparseGraph random_graph(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (bernoulli(rng, p)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
  }
  return SparseGraph::from_edges(n, edges, true);
}

// Floyd-Warshall hop counts.
std::vector<std::vector<std::size_t>> all_pairs(const SparseGraph& g) {
  const std::size_t n = g.num_nodes();
  const std::size_t inf = std::numeric_limits<std::size_t>::max() / 4;
  std::vector<std::vector<std::size_t>> d(n, std::vector<std::size_t>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (NodeId j : g.neighbors(i)) d[i][j] = 1;
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    }
  }
  return d;
}

}  // namespace

TEST(Dataset, SmallestValidFile) {
  const auto ds = parse("NODES 2 1\n0: 1.0\n1: 2.0\nEDGES 1\n0 1\nUNDIRECTED\n");
  EXPECT_EQ(ds.num_nodes(), 2U);
  EXPECT_EQ(ds.graph.num_arcs(), 2U);
  EXPECT_EQ(ds.features(0, 0), 1.0F);
  EXPECT_EQ(ds.features(1, 0), 2.0F);
  EXPECT_FALSE(ds.labels.has_value());
}

TEST(Dataset, MissingFeatureRow) {
  try {
    parse("NODES 3 1\n0: 1.0\n1: 2.0\nEDGES 0\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("feature row count mismatch"), std::string::npos) << e.what();
  }
}

TEST(Dataset, SelfLoopDroppedAndDuplicatesMerged) {
  const auto ds = parse("NODES 3 1\n0: 0\n1: 0\n2: 0\nEDGES 4\n0 0\n0 1\n1 0\n1 2\nUNDIRECTED\n");
  EXPECT_EQ(ds.graph.num_edges(), 2U);
  EXPECT_FALSE(ds.graph.has_edge(0, 0));
}

TEST(Dataset, MalformedInputsAreErrors) {
  EXPECT_THROW(parse("NODE 2 1\n"), DataError);
  EXPECT_THROW(parse("NODES 2 1\n0: 1\n1: 1\nEDGES 1\n0 5\n"), DataError);
  EXPECT_THROW(parse("NODES 2 1\n1: 1\n0: 1\nEDGES 0\n"), DataError);
  EXPECT_THROW(parse("NODES 2 2\n0: 1\n1: 1 1\nEDGES 0\n"), DataError);
  EXPECT_THROW(parse("NODES 2 1\n0: 1\n1: 1\nEDGES 2\n0 1\n"), DataError);
}

TEST(Dataset, DirectedEdgesStayDirected) {
  const auto ds = parse("NODES 2 1\n0: 0\n1: 0\nEDGES 1\n0 1\n");
  EXPECT_FALSE(ds.graph.is_undirected());
  EXPECT_TRUE(ds.graph.has_edge(0, 1));
  EXPECT_FALSE(ds.graph.has_edge(1, 0));
}

TEST(Dataset, RoundTripIsCanonical) {
  SbmSpec spec;
  spec.nodes_per_block = 20;
  spec.seed = 3;
  const auto ds = generate_sbm(spec);
  std::stringstream a;
  write_dataset(ds, a);
  const auto back = read_dataset(a);
  EXPECT_EQ(back.graph, ds.graph);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_TRUE(std::equal(back.features.values().begin(), back.features.values().end(),
                         ds.features.values().begin()));
  std::stringstream b;
  write_dataset(back, b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Graph, CsrInvariantsHold) {
  const auto g = random_graph(40, 0.2, 5);
  const auto offsets = g.row_offsets();
  ASSERT_EQ(offsets.size(), 41U);
  EXPECT_EQ(offsets.back(), g.num_arcs());
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_LE(offsets[i], offsets[i + 1]);
    const auto nb = g.neighbors(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      EXPECT_LT(nb[k], 40U);
      EXPECT_NE(nb[k], i);
      if (k > 0) EXPECT_LT(nb[k - 1], nb[k]);
      EXPECT_TRUE(g.has_edge(nb[k], static_cast<NodeId>(i)));
    }
  }
}

TEST(Graph, OutOfRangeEdgeThrows) {
  const std::vector<Edge> e{{0, 3}};
  EXPECT_THROW(SparseGraph::from_edges(3, e, true), DataError);
}

TEST(Normalize, SingleEdge) {
  const std::vector<Edge> e{{0, 1}};
  const auto adj = normalize(SparseGraph::from_edges(2, e, true));
  EXPECT_FLOAT_EQ(adj.weight(0, 1), 0.5F);
  EXPECT_FLOAT_EQ(adj.weight(1, 0), 0.5F);
  EXPECT_FLOAT_EQ(adj.weight(0, 0), 0.5F);
  EXPECT_FLOAT_EQ(adj.weight(1, 1), 0.5F);
}

TEST(Normalize, IsolatedNode) {
  const std::vector<Edge> e{{0, 1}};
  const auto adj = normalize(SparseGraph::from_edges(3, e, true));
  EXPECT_FLOAT_EQ(adj.weight(2, 2), 1.0F);
  EXPECT_EQ(adj.row_offsets()[3] - adj.row_offsets()[2], 1U);
}

TEST(Normalize, Triangle) {
  const std::vector<Edge> e{{0, 1}, {1, 2}, {0, 2}};
  const auto adj = normalize(SparseGraph::from_edges(3, e, true));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(adj.weight(i, j), 1.0 / 3.0, 1e-7);
  }
}

TEST(Normalize, SymmetricAndMatchesDegreeFormula) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = random_graph(30, 0.15, seed);
    const auto adj = normalize(g);
    for (std::size_t i = 0; i < 30; ++i) {
      for (std::size_t j = 0; j < 30; ++j) {
        EXPECT_EQ(adj.weight(i, j), adj.weight(j, i));
        const double expect = (i == j || g.has_edge(i, j))
                                  ? 1.0 / std::sqrt(double(g.degree(i) + 1) * double(g.degree(j) + 1))
                                  : 0.0;
        EXPECT_NEAR(adj.weight(i, j), expect, 1e-7);
      }
    }
  }
}

TEST(Normalize, RowSumsOfRegularGraphAreOne) {
  // Cycle: every node has degree 2.
  std::vector<Edge> e;
  for (NodeId i = 0; i < 9; ++i) e.push_back({i, static_cast<NodeId>((i + 1) % 9)});
  const auto adj = normalize(SparseGraph::from_edges(9, e, true));
  for (std::size_t i = 0; i < 9; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 9; ++j) row += adj.weight(i, j);
    EXPECT_NEAR(row, 1.0, 1e-6);
  }
}

TEST(Normalize, HubRowSumExceedsOne) {
  const std::vector<Edge> e{{0, 1}, {0, 2}, {0, 3}};
  const auto adj = normalize(SparseGraph::from_edges(4, e, true));
  double hub = 0.0;
  for (std::size_t j = 0; j < 4; ++j) hub += adj.weight(0, j);
  EXPECT_NEAR(hub, 0.25 + 3.0 / std::sqrt(8.0), 1e-6);
  EXPECT_GT(hub, 1.0);
}

TEST(Sbm, DisjointCliques) {
  SbmSpec spec;
  spec.blocks = 2;
  spec.nodes_per_block = 2;
  spec.p_in = 1.0;
  spec.p_out = 0.0;
  spec.feature_dim = 2;
  const auto ds = generate_sbm(spec);
  EXPECT_EQ(ds.graph.num_edges(), 2U);
  EXPECT_TRUE(ds.graph.has_edge(0, 1));
  EXPECT_TRUE(ds.graph.has_edge(2, 3));
}

TEST(Sbm, Deterministic) {
  SbmSpec spec;
  spec.seed = 9;
  const auto a = generate_sbm(spec);
  const auto b = generate_sbm(spec);
  EXPECT_EQ(a.graph, b.graph);
  EXPECT_TRUE(std::equal(a.features.values().begin(), a.features.values().end(), b.features.values().begin()));
  EXPECT_EQ(a.split, b.split);
}

TEST(Sbm, IntraBlockDensityConcentrates) {
  SbmSpec spec;
  spec.seed = 7;
  const auto ds = generate_sbm(spec);
  std::size_t within = 0;
  for (const auto& e : ds.graph.edge_list()) within += (e.u / 100 == e.v / 100) ? 1 : 0;
  const double density = static_cast<double>(within) / (3.0 * 100.0 * 99.0 / 2.0);
  EXPECT_GE(density, 0.07);
  EXPECT_LE(density, 0.13);
}

TEST(Sbm, ZeroProbabilitiesGiveEmptyGraph) {
  SbmSpec spec;
  spec.p_in = 0.0;
  spec.p_out = 0.0;
  EXPECT_EQ(generate_sbm(spec).graph.num_edges(), 0U);
}

TEST(Sbm, InvalidSpecsRejected) {
  SbmSpec spec;
  spec.p_out = 0.2;
  EXPECT_THROW(generate_sbm(spec), ConfigError);
  spec = {};
  spec.feature_dim = 2;
  EXPECT_THROW(generate_sbm(spec), ConfigError);
}

TEST(Split, StratifiedPartition) {
  SbmSpec spec;
  const auto ds = generate_sbm(spec);
  std::map<std::pair<int, SplitTag>, int> counts;
  for (std::size_t i = 0; i < ds.num_nodes(); ++i) ++counts[{(*ds.labels)[i], ds.split[i]}];
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ((counts[{c, SplitTag::train}]), 10);
    EXPECT_EQ((counts[{c, SplitTag::val}]), 10);
    EXPECT_EQ((counts[{c, SplitTag::test}]), 80);
  }
}

TEST(KHop, PathGraph) {
  const std::vector<Edge> e{{0, 1}, {1, 2}};
  const auto g = SparseGraph::from_edges(3, e, true);
  EXPECT_EQ(khop_neighbors(g, 0, 2), std::vector<NodeId>{2});
}

TEST(KHop, TriangleHasNoTwoHop) {
  const std::vector<Edge> e{{0, 1}, {1, 2}, {0, 2}};
  EXPECT_TRUE(khop_neighbors(SparseGraph::from_edges(3, e, true), 0, 2).empty());
}

TEST(KHop, MatchesAllPairsOracle) {
  // A chain of five planted blocks; long paths make k = 5 non-trivial.
  Rng rng(31);
  const std::size_t n = 150, per = 30;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t bi = i / per, bj = j / per;
      const double p = bi == bj ? 0.12 : (bj == bi + 1 ? 0.005 : 0.0);
      if (bernoulli(rng, p)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
  }
  const auto g = SparseGraph::from_edges(n, edges, true);
  const auto d = all_pairs(g);
  std::size_t nonempty = 0;
  for (std::size_t k = 1; k <= 6; ++k) {
    for (std::size_t node = 0; node < n; node += 7) {
      std::vector<NodeId> expect;
      for (std::size_t j = 0; j < n; ++j) {
        if (d[node][j] == k) expect.push_back(static_cast<NodeId>(j));
      }
      EXPECT_EQ(khop_neighbors(g, node, k), expect) << "node " << node << " k " << k;
      if (k == 5 && !expect.empty()) ++nonempty;
    }
  }
  EXPECT_GT(nonempty, 0U);
}

TEST(KHop, ZeroHopRejected) {
  EXPECT_THROW(khop_neighbors(SparseGraph::from_edges(2, {}, true), 0, 0), ConfigError);
}
