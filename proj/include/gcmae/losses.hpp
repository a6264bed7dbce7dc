// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gcmae/config.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/ops.hpp"
#include "gcmae/rng.hpp"

namespace gcmae {

inline constexpr double kCosineFloor = 1e-8;
inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kDistanceFloor = 1e-8;

/// Mean over masked rows of (1 - cos(x_i, z_i))^gamma.
template <class T>
Tensor<T> sce_loss(const Tensor<T>& x, const Tensor<T>& z, std::span<const NodeId> masked,
                   double gamma) {
  if (!x.same_shape(z)) throw ShapeError("sce_loss: " + x.shape_string() + " vs " + z.shape_string());
  if (masked.empty()) throw NumericError("sce_loss: empty masked set (p_mask = 0?)");
  const auto xn = row_l2_normalize(gather_rows(x, masked), kCosineFloor);
  const auto zn = row_l2_normalize(gather_rows(z, masked), kCosineFloor);
  const auto cosine = row_sum(elementwise_mul(xn, zn));
  return mean_all(power(relu(one_minus(cosine)), gamma));
}

/// Symmetric InfoNCE over aligned rows of U and V. For anchor u_i the
/// denominator holds u_j (j != i) and every v_j, the positive included.
template <class T>
Tensor<T> infonce_loss(const Tensor<T>& u, const Tensor<T>& v, double tau) {
  if (!u.same_shape(v)) throw ShapeError("infonce_loss: " + u.shape_string() + " vs " + v.shape_string());
  const std::size_t n = u.rows();
  if (n < 2) throw NumericError("infonce_loss: need at least 2 rows");
  const double inv_tau = 1.0 / tau;
  const auto un = row_l2_normalize(u, kCosineFloor);
  const auto vn = row_l2_normalize(v, kCosineFloor);
  const auto s_uv = scale(matmul_nt(un, vn), inv_tau);
  const auto s_uu = scale(matmul_nt(un, un), inv_tau);
  const auto s_vv = scale(matmul_nt(vn, vn), inv_tau);
  const auto s_vu = transpose(s_uv);
  const auto positive = scale(row_sum(elementwise_mul(un, vn)), inv_tau);

  std::vector<std::uint8_t> keep(n * 2 * n, 1);
  for (std::size_t i = 0; i < n; ++i) keep[i * 2 * n + i] = 0;

  const auto l_uv = sub(row_logsumexp(concat_cols(s_uu, s_uv), keep), positive);
  const auto l_vu = sub(row_logsumexp(concat_cols(s_vv, s_vu), keep), positive);
  return scale(add(sum_all(l_uv), sum_all(l_vu)), 1.0 / (2.0 * static_cast<double>(n)));
}

/// B distinct nodes drawn uniformly.
inline std::vector<NodeId> sample_block(std::size_t num_nodes, std::size_t block_size, Rng& rng) {
  if (block_size < 2) throw ConfigError("sample_block: block size must be >= 2");
  if (block_size > num_nodes) throw ConfigError("sample_block: block larger than graph");
  return sample_without_replacement(num_nodes, block_size, rng);
}

template <class T>
struct AdjacencyTerms {
  Tensor<T> mse;
  Tensor<T> bce;
  Tensor<T> dist;
  bool dist_skipped = false;  // block contained no edge
};

/// MSE, BCE and relative-distance terms on the B x B block of sigmoid(Z Z^T),
/// diagonal excluded from every sum. The distance term contrasts
/// sum exp(-||z_i - z_j||^2) over connected pairs against disconnected pairs.
template <class T>
AdjacencyTerms<T> adj_recon_losses(const Tensor<T>& z, const SparseGraph& graph,
                                   std::span<const NodeId> block) {
  const std::size_t b = block.size();
  if (b < 2) throw ConfigError("adj_recon_losses: block size must be >= 2");
  if (b > graph.num_nodes()) throw ConfigError("adj_recon_losses: block larger than graph");
  if (z.rows() != graph.num_nodes()) throw ShapeError("adj_recon_losses: Z rows != graph nodes");

  std::vector<T> target(b * b, T{0});
  std::vector<T> non_edge(b * b, T{0});
  std::vector<T> off_diag(b * b, T{1});
  std::size_t edges = 0;
  for (std::size_t i = 0; i < b; ++i) {
    off_diag[i * b + i] = T{0};
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j) continue;
      if (graph.has_edge(block[i], block[j])) {
        target[i * b + j] = T{1};
        ++edges;
      } else {
        non_edge[i * b + j] = T{1};
      }
    }
  }
  const Tensor<T> a(b, b, std::move(target));
  const Tensor<T> not_a(b, b, std::move(non_edge));
  const Tensor<T> mask(b, b, std::move(off_diag));
  const double inv_cells = 1.0 / static_cast<double>(b * b);

  const auto zb = gather_rows(z, block);
  const auto prob = sigmoid(transpose_matmul_self(zb));

  AdjacencyTerms<T> out;
  const auto diff = sub(prob, a);
  out.mse = scale(sum_all(elementwise_mul(elementwise_mul(diff, diff), mask)), inv_cells);

  const auto pc = clamp(prob, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const auto ll = add(elementwise_mul(a, log(pc)), elementwise_mul(not_a, log(one_minus(pc))));
  out.bce = scale(sum_all(elementwise_mul(ll, mask)), -inv_cells);

  if (edges == 0) {
    out.dist = Tensor<T>::scalar(T{0});
    out.dist_skipped = true;
    return out;
  }
  const auto kernel = exp(scale(pairwise_sq_dist(zb), -1.0));
  const auto connected = clamp(sum_all(elementwise_mul(kernel, a)), kDistanceFloor,
                               std::numeric_limits<double>::max());
  const auto disconnected = clamp(sum_all(elementwise_mul(kernel, not_a)), kDistanceFloor,
                                  std::numeric_limits<double>::max());
  out.dist = sub(log(disconnected), log(connected));
  return out;
}

/// Hinge on per-dimension standard deviation, mean over dimensions of
/// max(0, 1 - sqrt(Var + eps)). `literal` returns mean sqrt(Var + eps) instead.
template <class T>
Tensor<T> variance_loss(const Tensor<T>& h, double epsilon, bool literal = false) {
  if (h.rows() < 2) throw NumericError("variance_loss: need at least 2 rows");
  const auto stddev = power(add_scalar(column_variance(h), epsilon), 0.5);
  if (literal) return mean_all(stddev);
  return mean_all(relu(one_minus(stddev)));
}

/// Scalar values of every objective term. Absent terms read as 0.
struct LossBreakdown {
  double sce = 0.0;
  double contrastive = 0.0;
  double mse = 0.0;
  double bce = 0.0;
  double dist = 0.0;
  double structure_total = 0.0;
  double variance = 0.0;
  double total = 0.0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

template <class T>
struct LossTerms {
  std::optional<Tensor<T>> sce;
  std::optional<Tensor<T>> contrastive;
  std::optional<AdjacencyTerms<T>> structure;
  std::optional<Tensor<T>> variance;
};

template <class T>
struct Objective {
  Tensor<T> total;
  LossBreakdown breakdown;
};

/// J = w_sce * SCE + alpha * C + lambda * (MSE + BCE + DIST) + mu * Var.
/// `breakdown.total` is recomputed in double from the component values.
template <class T>
Objective<T> total_loss(const LossTerms<T>& terms, const LossWeights& w, double sce_weight = 1.0) {
  LossBreakdown b;
  std::optional<Tensor<T>> total;
  auto accumulate = [&total](const Tensor<T>& term, double weight) {
    const auto weighted = weight == 1.0 ? term : scale(term, weight);
    total = total ? add(*total, weighted) : weighted;
  };
  if (terms.sce && sce_weight != 0.0) {
    b.sce = static_cast<double>(terms.sce->item());
    accumulate(*terms.sce, sce_weight);
  }
  if (terms.contrastive && w.alpha != 0.0) {
    b.contrastive = static_cast<double>(terms.contrastive->item());
    accumulate(*terms.contrastive, w.alpha);
  }
  if (terms.structure && w.lambda != 0.0) {
    const auto& s = *terms.structure;
    b.mse = static_cast<double>(s.mse.item());
    b.bce = static_cast<double>(s.bce.item());
    b.dist = static_cast<double>(s.dist.item());
    b.structure_total = b.mse + b.bce + b.dist;
    accumulate(add(add(s.mse, s.bce), s.dist), w.lambda);
  }
  if (terms.variance && w.mu != 0.0) {
    b.variance = static_cast<double>(terms.variance->item());
    accumulate(*terms.variance, w.mu);
  }
  if (!total) throw ConfigError("total_loss: every term has zero weight");
  b.total = sce_weight * b.sce + w.alpha * b.contrastive + w.lambda * b.structure_total + w.mu * b.variance;
  return {*total, b};
}

}  // namespace gcmae
