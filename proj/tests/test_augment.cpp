// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gcmae/gcmae.hpp"

using namespace gcmae;

namespace {

SparseGraph gnp(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (bernoulli(rng, p)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
  }
  return SparseGraph::from_edges(n, edges, true);
}

std::set<std::pair<NodeId, NodeId>> arcs(const SparseGraph& g) {
  std::set<std::pair<NodeId, NodeId>> out;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (NodeId j : g.neighbors(i)) out.insert({static_cast<NodeId>(i), j});
  }
  return out;
}

}  // namespace

TEST(MaskFeatures, EmptyPlanIsIdentity) {
  const auto x = Tensor<float>::from_rows({{1, 2}, {3, 4}});
  const auto out = mask_features(x, MaskPlan{});
  EXPECT_TRUE(std::equal(out.values().begin(), out.values().end(), x.values().begin()));
}

TEST(MaskFeatures, FullPlanZeroesEverything) {
  const auto x = Tensor<float>::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const auto out = mask_features(x, MaskPlan{{0, 1, 2}});
  for (float v : out.values()) EXPECT_EQ(v, 0.0F);
}

TEST(MaskFeatures, ZeroesOnlyMaskedRows) {
  const auto out = mask_features(Tensor<float>::from_rows({{1, 1}, {2, 2}}), MaskPlan{{0}});
  EXPECT_EQ(out(0, 0), 0.0F);
  EXPECT_EQ(out(0, 1), 0.0F);
  EXPECT_EQ(out(1, 0), 2.0F);
  EXPECT_EQ(out(1, 1), 2.0F);
}

TEST(MaskFeatures, Idempotent) {
  const auto plan = draw_mask_plan(12, 0.4, 77);
  Rng rng(3);
  std::vector<float> v(36);
  for (auto& x : v) x = static_cast<float>(uniform01(rng));
  const Tensor<float> x(12, 3, v);
  const auto once = mask_features(x, plan);
  const auto twice = mask_features(once, plan);
  EXPECT_TRUE(std::equal(once.values().begin(), once.values().end(), twice.values().begin()));
}

TEST(MaskFeatures, GradientFlowsOnlyThroughVisibleRows) {
  const auto x = Tensor<double>::parameter(3, 2, {1, 2, 3, 4, 5, 6});
  Tape<double> tape;
  Tensor<double> y;
  {
    Tape<double>::Recording rec(tape);
    y = sum_all(mask_features(x, MaskPlan{{1}}));
  }
  const auto g = tape.backward(y).of(x);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(1, 0), 0.0);
  EXPECT_EQ(g(1, 1), 0.0);
  EXPECT_EQ(g(2, 1), 1.0);
}

TEST(DropNodes, EmptyPlanIsIdentity) {
  const auto g = gnp(15, 0.3, 2);
  EXPECT_EQ(drop_nodes(g, DropPlan{}), g);
}

TEST(DropNodes, TriangleKeepsOppositeEdge) {
  const std::vector<Edge> e{{0, 1}, {1, 2}, {0, 2}};
  const auto out = drop_nodes(SparseGraph::from_edges(3, e, true), DropPlan{{0}});
  EXPECT_EQ(out.num_nodes(), 3U);
  EXPECT_EQ(out.num_edges(), 1U);
  EXPECT_TRUE(out.has_edge(1, 2));
  EXPECT_TRUE(out.has_edge(2, 1));
}

TEST(DropNodes, MatchesFilterOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = gnp(20, 0.3, seed);
    const auto plan = draw_drop_plan(20, 0.3, seed * 101);
    const std::set<NodeId> dropped(plan.dropped_nodes.begin(), plan.dropped_nodes.end());
    std::set<std::pair<NodeId, NodeId>> expect;
    for (const auto& a : arcs(g)) {
      if (!dropped.count(a.first) && !dropped.count(a.second)) expect.insert(a);
    }
    const auto out = drop_nodes(g, plan);
    EXPECT_EQ(arcs(out), expect) << "seed " << seed;
    EXPECT_EQ(out.num_nodes(), 20U);
    for (NodeId d : plan.dropped_nodes) EXPECT_EQ(out.degree(d), 0U);
  }
}

TEST(DropNodes, NeverAddsEdges) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = gnp(30, 0.2, seed);
    const auto before = arcs(g);
    for (const auto& a : arcs(drop_nodes(g, draw_drop_plan(30, 0.5, seed)))) {
      EXPECT_TRUE(before.count(a));
    }
  }
}

TEST(DrawPlans, ZeroMaskProbabilityGivesEmptySet) {
  TrainConfig c;
  c.p_mask = 0.0;
  for (std::uint64_t epoch = 0; epoch < 20; ++epoch) {
    EXPECT_TRUE(draw_plans(c, 50, epoch).first.masked_nodes.empty());
  }
}

TEST(DrawPlans, DeterministicInSeedAndEpoch) {
  TrainConfig c;
  c.seed = 1;
  const auto a = draw_plans(c, 200, 5);
  const auto b = draw_plans(c, 200, 5);
  EXPECT_EQ(a.first.masked_nodes, b.first.masked_nodes);
  EXPECT_EQ(a.second.dropped_nodes, b.second.dropped_nodes);
  const auto other = draw_plans(c, 200, 6);
  EXPECT_NE(a.first.masked_nodes, other.first.masked_nodes);
}

TEST(DrawPlans, MaskFractionConcentrates) {
  TrainConfig c;
  c.p_mask = 0.5;
  c.seed = 4;
  const auto plan = draw_plans(c, 10000, 0).first;
  const double frac = static_cast<double>(plan.masked_nodes.size()) / 10000.0;
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
  EXPECT_TRUE(std::is_sorted(plan.masked_nodes.begin(), plan.masked_nodes.end()));
}

TEST(DrawPlans, ProbabilityOutOfRangeThrows) {
  TrainConfig c;
  c.p_mask = 1.5;
  EXPECT_THROW(draw_plans(c, 10, 0), ConfigError);
  c.p_mask = 0.5;
  c.p_drop = -0.1;
  EXPECT_THROW(draw_plans(c, 10, 0), ConfigError);
}
