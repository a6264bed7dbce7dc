// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gcmae/error.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/model.hpp"
#include "gcmae/rng.hpp"
#include "gcmae/tensor.hpp"

namespace gcmae {

// --- linear probe -------------------------------------------------------------

struct LinearProbeOptions {
  std::size_t steps = 500;
  double lr = 0.01;
  double l2 = 1e-4;
};

namespace eval_detail {

// Column-centred copy scaled by one global RMS factor; both steps commute
// with orthogonal rotations of the embedding space.
template <class T>
std::vector<double> centred(const Tensor<T>& e) {
  const std::size_t n = e.rows(), d = e.cols();
  std::vector<double> x(e.values().begin(), e.values().end());
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x[r * d + c];
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) x[r * d + c] -= mean;
  }
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  if (rms > 0.0) {
    for (double& v : x) v /= rms;
  }
  return x;
}

inline std::size_t argmax(const double* v, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (v[c] > v[best]) best = c;
  }
  return best;
}

}  // namespace eval_detail

/// Multinomial logistic regression on frozen embeddings, trained by
/// full-batch gradient descent on the train split; returns test accuracy.
template <class T>
double linear_probe(const Tensor<T>& embeddings, const std::vector<int>& labels,
                    const std::vector<SplitTag>& split, const LinearProbeOptions& opt = {}) {
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  if (labels.size() != n || split.size() != n) throw ShapeError("linear_probe: label/split size mismatch");
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < n; ++i) {
    if (split[i] == SplitTag::train) train.push_back(i);
    if (split[i] == SplitTag::test) test.push_back(i);
  }
  if (test.empty()) throw DataError("linear_probe: empty test split");
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw DataError("linear_probe: negative label");
    max_label = std::max(max_label, l);
  }
  const std::size_t k = static_cast<std::size_t>(max_label) + 1;
  std::vector<bool> seen(k, false);
  for (std::size_t i : train) seen[static_cast<std::size_t>(labels[i])] = true;
  for (std::size_t c = 0; c < k; ++c) {
    if (!seen[c]) throw DataError("linear_probe: class " + std::to_string(c) + " absent from train split");
  }

  const auto x = eval_detail::centred(embeddings);
  std::vector<double> w(d * k, 0.0), b(k, 0.0), gw(d * k), gb(k), p(k);
  const double inv = 1.0 / static_cast<double>(train.size());
  for (std::size_t step = 0; step < opt.steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i : train) {
      const double* xi = x.data() + i * d;
      for (std::size_t c = 0; c < k; ++c) p[c] = b[c];
      for (std::size_t f = 0; f < d; ++f) {
        for (std::size_t c = 0; c < k; ++c) p[c] += xi[f] * w[f * k + c];
      }
      const double mx = *std::max_element(p.begin(), p.end());
      double z = 0.0;
      for (double& v : p) z += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < k; ++c) {
        const double r = (p[c] / z - (static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0)) * inv;
        gb[c] += r;
        for (std::size_t f = 0; f < d; ++f) gw[f * k + c] += r * xi[f];
      }
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= opt.lr * (gw[j] + opt.l2 * w[j]);
    for (std::size_t c = 0; c < k; ++c) b[c] -= opt.lr * gb[c];
  }

  std::size_t correct = 0;
  for (std::size_t i : test) {
    const double* xi = x.data() + i * d;
    for (std::size_t c = 0; c < k; ++c) p[c] = b[c];
    for (std::size_t f = 0; f < d; ++f) {
      for (std::size_t c = 0; c < k; ++c) p[c] += xi[f] * w[f * k + c];
    }
    if (eval_detail::argmax(p.data(), k) == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

// --- ranking metrics ----------------------------------------------------------

/// P(random positive outscores random negative), ties counted 1/2.
inline double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw DataError("auc: need positives and negatives");
  std::vector<std::pair<double, int>> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.emplace_back(s, 1);
  for (double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Mann-Whitney with mid-ranks; integer halves keep it exact.
  long double rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t positives = 0;
    while (j < all.size() && all[j].first == all[i].first) positives += static_cast<std::size_t>(all[j++].second);
    // ranks i+1 .. j, mid-rank = (i + 1 + j) / 2
    rank_sum_x2 += static_cast<long double>(positives) * static_cast<long double>(i + 1 + j);
    i = j;
  }
  const long double np = static_cast<long double>(pos.size());
  const long double nn = static_cast<long double>(neg.size());
  const long double u_x2 = rank_sum_x2 - np * (np + 1);
  return static_cast<double>(u_x2 / (2 * np * nn));
}

/// Step-interpolated area under precision-recall: sum over distinct
/// thresholds of (R_k - R_{k-1}) * P_k.
inline double average_precision(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty()) throw DataError("average_precision: no positives");
  std::vector<std::pair<double, int>> all;
  for (double s : pos) all.emplace_back(s, 1);
  for (double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < all.size()) {
    const double s = all[i].first;
    while (i < all.size() && all[i].first == s) {
      tp += static_cast<std::size_t>(all[i].second);
      ++seen;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos.size());
    ap += (recall - prev_recall) * (static_cast<double>(tp) / static_cast<double>(seen));
    prev_recall = recall;
  }
  return ap;
}

// --- link prediction ----------------------------------------------------------

struct EdgeSplit {
  std::vector<Edge> train, val, test;
  std::vector<Edge> train_negatives, val_negatives, test_negatives;
  SparseGraph message_graph;  // train edges only
};

struct EdgeSplitOptions {
  double val_fraction = 0.05;
  double test_fraction = 0.10;
};

/// Shuffled 85/5/10 split of the undirected edge set. Negatives are distinct
/// non-edges of the full graph, one per positive, never shared across splits.
inline EdgeSplit make_edge_split(const SparseGraph& graph, std::uint64_t seed,
                                 const EdgeSplitOptions& opt = {}) {
  if (!graph.is_undirected()) throw DataError("make_edge_split: graph must be undirected");
  auto edges = graph.edge_list();
  Rng rng = make_rng(seed, Stream::edge_split, {});
  shuffle(std::span<Edge>(edges), rng);
  const std::size_t m = edges.size();
  const auto n_test = static_cast<std::size_t>(std::lround(opt.test_fraction * static_cast<double>(m)));
  const auto n_val = static_cast<std::size_t>(std::lround(opt.val_fraction * static_cast<double>(m)));
  if (n_test == 0) throw DataError("make_edge_split: too few edges for a test split");
  if (n_test + n_val >= m) throw DataError("make_edge_split: no edges left for training");

  EdgeSplit s;
  s.test.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_test),
               edges.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), edges.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());

  const std::size_t n = graph.num_nodes();
  const std::size_t pairs = n * (n - 1) / 2;
  if (pairs - m < m) throw DataError("make_edge_split: graph too dense for 1:1 negatives");
  Rng neg_rng = make_rng(seed, Stream::negatives, {});
  std::set<Edge> used;
  auto draw = [&](std::size_t count) {
    std::vector<Edge> out;
    out.reserve(count);
    while (out.size() < count) {
      auto u = static_cast<NodeId>(uniform_index(neg_rng, n));
      auto v = static_cast<NodeId>(uniform_index(neg_rng, n));
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (graph.has_edge(u, v) || !used.insert({u, v}).second) continue;
      out.push_back({u, v});
    }
    return out;
  };
  s.train_negatives = draw(s.train.size());
  s.val_negatives = draw(s.val.size());
  s.test_negatives = draw(s.test.size());
  s.message_graph = SparseGraph::from_edges(n, s.train, true);
  return s;
}

/// Throws DataError if a held-out edge is visible to message passing.
inline void check_no_leakage(const EdgeSplit& s) {
  for (const auto* part : {&s.val, &s.test}) {
    for (const auto& e : *part) {
      if (s.message_graph.has_edge(e.u, e.v)) throw DataError("edge split leaks a held-out edge");
    }
  }
}

struct LinkScores {
  double auc = 0.0;
  double ap = 0.0;
};

/// Score pairs by sigmoid(z_u . z_v) with Z the decoder output of the
/// model run on the train-edge graph.
template <class T>
LinkScores link_prediction_eval(const ModelParams<T>& params, const Dataset& dataset, const EdgeSplit& split) {
  if (split.test.empty()) throw DataError("link_prediction_eval: empty test split");
  check_no_leakage(split);
  const auto z = reconstruct(params, normalize(split.message_graph), dataset.features);
  auto score = [&z](const Edge& e) {
    const auto a = z.row(e.u), b = z.row(e.v);
    double dot = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) dot += static_cast<double>(a[c]) * static_cast<double>(b[c]);
    return 1.0 / (1.0 + std::exp(-dot));
  };
  std::vector<double> pos, neg;
  for (const auto& e : split.test) pos.push_back(score(e));
  for (const auto& e : split.test_negatives) neg.push_back(score(e));
  return {auc(pos, neg), average_precision(pos, neg)};
}

// --- clustering -----------------------------------------------------------------

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
  double tolerance = 1e-6;
};

struct KMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  // Inertia after each assignment step, one list per restart.
  std::vector<std::vector<double>> inertia_history;
};

/// Lloyd's algorithm with k-means++ seeding; the lowest-inertia restart wins.
template <class T>
KMeansResult kmeans_cluster(const Tensor<T>& embeddings, std::size_t k, Rng& rng,
                            const KMeansOptions& opt = {}) {
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  if (k < 2) throw ConfigError("kmeans_cluster: K must be >= 2");
  if (k > n) throw ConfigError("kmeans_cluster: K larger than number of points");
  const std::vector<double> x(embeddings.values().begin(), embeddings.values().end());
  auto sq = [&](std::size_t i, const double* c) {
    double s = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
      const double t = x[i * d + f] - c[f];
      s += t * t;
    }
    return s;
  };

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, opt.restarts); ++restart) {
    std::vector<double> centres(k * d);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t first = uniform_index(rng, n);
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(first * d), d, centres.begin());
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nearest[i] = std::min(nearest[i], sq(i, centres.data() + (c - 1) * d));
        total += nearest[i];
      }
      std::size_t pick = n - 1;
      if (total > 0.0) {
        double target = uniform01(rng) * total;
        for (std::size_t i = 0; i < n; ++i) {
          target -= nearest[i];
          if (target < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = uniform_index(rng, n);
      }
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(pick * d), d,
                  centres.begin() + static_cast<std::ptrdiff_t>(c * d));
    }

    std::vector<int> labels(n, 0);
    std::vector<double> history;
    double inertia = 0.0;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double dist = sq(i, centres.data() + c * d);
          if (dist < bd) {
            bd = dist;
            labels[i] = static_cast<int>(c);
          }
        }
        inertia += bd;
      }
      history.push_back(inertia);

      std::vector<double> next(k * d, 0.0);
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        for (std::size_t f = 0; f < d; ++f) next[c * d + f] += x[i * d + f];
      }
      double shift = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (std::size_t f = 0; f < d; ++f) {
          // An empty cluster keeps its centre.
          const double v = counts[c] == 0 ? centres[c * d + f] : next[c * d + f] / static_cast<double>(counts[c]);
          s += (v - centres[c * d + f]) * (v - centres[c * d + f]);
          centres[c * d + f] = v;
        }
        shift = std::max(shift, std::sqrt(s));
      }
      if (shift < opt.tolerance) break;
    }
    best.inertia_history.push_back(history);
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
    }
  }
  return best;
}

struct ClusterScores {
  double nmi = 0.0;
  double ari = 0.0;
};

/// NMI with arithmetic-mean entropy normalisation and pair-counting ARI.
/// Degenerate 0/0 cases read as 0.
inline ClusterScores nmi_ari(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty()) throw DataError("nmi_ari: empty labeling");
  if (pred.size() != truth.size()) throw ShapeError("nmi_ari: labelings differ in length");
  const double n = static_cast<double>(pred.size());
  std::map<std::pair<int, int>, std::size_t> joint;
  std::map<int, std::size_t> a, b;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++joint[{pred[i], truth[i]}];
    ++a[pred[i]];
    ++b[truth[i]];
  }
  auto entropy = [n](const std::map<int, std::size_t>& m) {
    double h = 0.0;
    for (const auto& [_, c] : m) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    const double pij = static_cast<double>(c) / n;
    const double pa = static_cast<double>(a[key.first]) / n;
    const double pb = static_cast<double>(b[key.second]) / n;
    mi += pij * std::log(pij / (pa * pb));
  }
  const double norm = 0.5 * (entropy(a) + entropy(b));
  ClusterScores out;
  out.nmi = norm > 0.0 ? std::clamp(mi / norm, 0.0, 1.0) : 0.0;

  auto pairs = [](std::size_t c) { return static_cast<double>(c) * static_cast<double>(c - (c > 0 ? 1 : 0)) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [_, c] : joint) index += pairs(c);
  for (const auto& [_, c] : a) sa += pairs(c);
  for (const auto& [_, c] : b) sb += pairs(c);
  const double total = pairs(pred.size());
  const double expected = sa * sb / total;
  const double denom = 0.5 * (sa + sb) - expected;
  out.ari = denom != 0.0 ? (index - expected) / denom : 0.0;
  return out;
}

// --- projection -----------------------------------------------------------------

struct Pca2d {
  std::vector<double> coords;  // N x 2, row-major
  std::vector<double> components;  // 2 x d
  std::vector<double> explained;   // variance along each component
};

namespace eval_detail {

inline void orthonormalise(std::vector<double>& v, const std::vector<double>* against) {
  if (against != nullptr) {
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * (*against)[i];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * (*against)[i];
  }
  double norm = 0.0;
  for (double t : v) norm += t * t;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& t : v) t /= norm;
  }
}

}  // namespace eval_detail

/// Mean-centred projection onto the two leading right singular directions,
/// found by power iteration on the covariance with deflation. Each
/// direction is signed so its largest-magnitude loading is positive.
template <class T>
Pca2d pca_2d(const Tensor<T>& embeddings, double tol = 1e-7, std::size_t max_iterations = 20000) {
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  if (n < 2) throw DataError("pca_2d: need at least 2 points");
  std::vector<double> x(embeddings.values().begin(), embeddings.values().end());
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x[r * d + c];
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) x[r * d + c] -= mean;
  }
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[r * d + i];
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += xi * x[r * d + j];
    }
  }
  for (double& v : cov) v /= static_cast<double>(n);
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov[i * d + i];

  Pca2d out;
  out.components.assign(2 * d, 0.0);
  std::vector<double> first;
  Rng rng(0x9E3779B97F4A7C15ULL);
  for (int which = 0; which < 2; ++which) {
    std::vector<double> v(d);
    for (double& t : v) t = uniform01(rng) - 0.5;
    eval_detail::orthonormalise(v, which == 0 ? nullptr : &first);
    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iterations; ++it) {
      std::vector<double> w(d, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) w[i] += cov[i * d + j] * v[j];
      }
      if (which == 1) {
        // Deflate: remove the first component's contribution.
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += first[i] * v[i];
        for (std::size_t i = 0; i < d; ++i) w[i] -= out.explained[0] * dot * first[i];
      }
      double norm = 0.0;
      for (double t : w) norm += t * t;
      norm = std::sqrt(norm);
      if (norm <= 1e-12 * trace) {
        lambda = 0.0;
        break;  // remaining variance is zero; any orthogonal direction works
      }
      eval_detail::orthonormalise(w, which == 0 ? nullptr : &first);
      if (which == 1) eval_detail::orthonormalise(w, &first);
      double delta = 0.0;
      for (std::size_t i = 0; i < d; ++i) delta = std::max(delta, std::abs(w[i] - v[i]));
      lambda = norm;
      v = std::move(w);
      if (delta < tol) break;
    }
    std::size_t big = 0;
    for (std::size_t i = 1; i < d; ++i) {
      if (std::abs(v[i]) > std::abs(v[big])) big = i;
    }
    if (v[big] < 0.0) {
      for (double& t : v) t = -t;
    }
    out.explained.push_back(lambda);
    std::copy(v.begin(), v.end(), out.components.begin() + static_cast<std::ptrdiff_t>(which * d));
    if (which == 0) first = v;
  }
  out.coords.assign(n * 2, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t f = 0; f < d; ++f) s += x[r * d + f] * out.components[c * d + f];
      out.coords[r * 2 + c] = s;
    }
  }
  return out;
}

inline void write_pca_csv(std::ostream& out, const Pca2d& pca, const std::optional<std::vector<int>>& labels) {
  out << "node,x,y,label\n";
  const std::size_t n = pca.coords.size() / 2;
  out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < n; ++i) {
    out << i << ',' << pca.coords[2 * i] << ',' << pca.coords[2 * i + 1] << ',';
    if (labels) out << (*labels)[i];
    out << '\n';
  }
}

// --- aggregation ------------------------------------------------------------------

/// Metric values for one evaluation run; absent entries were not computed.
struct Metrics {
  std::optional<double> accuracy, auc, ap, nmi, ari, probe;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

/// Mean and std for every metric present in any run.
inline std::map<std::string, Summary> aggregate(const std::vector<Metrics>& runs) {
  std::map<std::string, std::vector<double>> cols;
  for (const auto& m : runs) {
    const std::pair<const char*, const std::optional<double>*> fields[] = {
        {"accuracy", &m.accuracy}, {"auc", &m.auc}, {"ap", &m.ap},
        {"nmi", &m.nmi},           {"ari", &m.ari}, {"probe", &m.probe}};
    for (const auto& [name, value] : fields) {
      if (*value) cols[name].push_back(**value);
    }
  }
  std::map<std::string, Summary> out;
  for (const auto& [name, values] : cols) out[name] = summarize(values);
  return out;
}

}  // namespace gcmae
