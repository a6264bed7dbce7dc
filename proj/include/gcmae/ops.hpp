// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitives over Tensor<T>. Forward values are stored in T;
// every reduction and inner product accumulates in double. An op is recorded
// on the active tape when at least one input requires a gradient.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gcmae/error.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/tensor.hpp"

namespace gcmae {

inline std::atomic<bool>& debug_validation_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

/// When on, every op output is scanned for NaN/Inf.
inline void set_debug_validation(bool on) { debug_validation_flag().store(on); }

namespace ops_detail {

template <class T>
using Ref = std::reference_wrapper<const Tensor<T>>;

template <class T>
using Adjoint = typename Tape<T>::Adjoint;

template <class T>
void check_finite(std::span<const T> values, const char* op) {
  if (!debug_validation_flag().load(std::memory_order_relaxed)) return;
  for (T v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

/// Wraps forward values into the output tensor and, when recording, registers
/// the adjoint built by `make_adjoint(output)`.
template <class T, class MakeAdjoint>
Tensor<T> emit(const char* op, std::size_t rows, std::size_t cols, std::vector<T> values,
               std::initializer_list<Ref<T>> inputs, MakeAdjoint&& make_adjoint) {
  check_finite<T>(values, op);
  Tape<T>* tape = Tape<T>::active();
  bool record = false;
  if (tape != nullptr) {
    for (const auto& in : inputs) record = record || in.get().requires_grad();
  }
  if (!record) return Tensor<T>(rows, cols, std::move(values));
  Tensor<T> out = Tensor<T>::recorded(rows, cols, std::move(values));
  std::vector<typename Tape<T>::Input> ins;
  ins.reserve(inputs.size());
  for (const auto& in : inputs) {
    ins.push_back({in.get().id(), in.get().size(), in.get().requires_grad()});
  }
  tape->record(std::move(ins), out, make_adjoint(out));
  return out;
}

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

template <class T>
std::string shapes(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape_string() + " vs " + b.shape_string();
}

/// Elementwise unary op with derivative expressed via input x and output y.
template <class T, class F, class DF>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, DF df) {
  std::vector<T> y(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<T>(f(static_cast<double>(xv[i])));
  return emit<T>(op, x.rows(), x.cols(), std::move(y), {x}, [x, df](const Tensor<T>& out) {
    return Adjoint<T>([x, out, df](std::span<const double> g, std::span<std::span<double>> gin) {
      const auto xv = x.values();
      const auto yv = out.values();
      auto& gx = gin[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * df(static_cast<double>(xv[i]), static_cast<double>(yv[i]));
      }
    });
  });
}

/// Shared CSR view for the two spmm overloads.
struct CsrCopy {
  std::vector<std::size_t> offsets;
  std::vector<NodeId> cols;
  std::vector<float> weights;  // empty => unit weights
  std::size_t n() const { return offsets.size() - 1; }
  double w(std::size_t k) const { return weights.empty() ? 1.0 : static_cast<double>(weights[k]); }
};

template <class T>
Tensor<T> spmm_impl(const CsrCopy& csr, const Tensor<T>& x) {
  require(csr.n() == x.rows(), "spmm", "adjacency has " + std::to_string(csr.n()) +
                                           " rows, input " + x.shape_string());
  const std::size_t n = x.rows();
  const std::size_t c = x.cols();
  std::vector<T> out(n * c);
  std::vector<double> acc(c);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = csr.offsets[i]; k < csr.offsets[i + 1]; ++k) {
      const double w = csr.w(k);
      const T* xr = xv.data() + static_cast<std::size_t>(csr.cols[k]) * c;
      for (std::size_t j = 0; j < c; ++j) acc[j] += w * static_cast<double>(xr[j]);
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<T>(acc[j]);
  }
  auto shared = std::make_shared<const CsrCopy>(csr);
  return emit<T>("spmm", n, c, std::move(out), {x}, [shared, c](const Tensor<T>&) {
    return Adjoint<T>([shared, c](std::span<const double> g, std::span<std::span<double>> gin) {
      auto& gx = gin[0];
      const auto& m = *shared;
      for (std::size_t i = 0; i < m.n(); ++i) {
        const double* gr = g.data() + i * c;
        for (std::size_t k = m.offsets[i]; k < m.offsets[i + 1]; ++k) {
          const double w = m.w(k);
          double* xr = gx.data() + static_cast<std::size_t>(m.cols[k]) * c;
          for (std::size_t j = 0; j < c; ++j) xr[j] += w * gr[j];
        }
      }
    });
  });
}

}  // namespace ops_detail

using ops_detail::Ref;

// --- products ---------------------------------------------------------------

namespace ops_detail {

// Row-major values widened to double, optionally transposed: (r x c) -> (c x r).
template <class T>
std::vector<double> widened(std::span<const T> v) {
  return std::vector<double>(v.begin(), v.end());
}

template <class T>
std::vector<double> transposed(std::span<const T> v, std::size_t r, std::size_t c) {
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = static_cast<double>(v[i * c + j]);
  }
  return out;
}

// c (n x m) += a (n x k) * b (k x m), all row-major double. The inner
// dimension is unrolled by four; summation order is fixed.
inline void gemm_acc(double* __restrict c, const double* __restrict a, const double* __restrict b, std::size_t n,
                     std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* cr = c + i * m;
    const double* ar = a + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double a0 = ar[p], a1 = ar[p + 1], a2 = ar[p + 2], a3 = ar[p + 3];
      const double* b0 = b + p * m;
      const double* b1 = b0 + m;
      const double* b2 = b1 + m;
      const double* b3 = b2 + m;
      for (std::size_t j = 0; j < m; ++j) cr[j] += (a0 * b0[j] + a1 * b1[j]) + (a2 * b2[j] + a3 * b3[j]);
    }
    for (; p < k; ++p) {
      const double ap = ar[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) cr[j] += ap * bp[j];
    }
  }
}

template <class T>
std::vector<T> narrowed(const std::vector<double>& v) {
  return std::vector<T>(v.begin(), v.end());
}

}  // namespace ops_detail

/// a (n x k) * b (k x m).
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  using namespace ops_detail;
  require(a.cols() == b.rows(), "matmul", shapes(a, b));
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> acc(n * m, 0.0);
  gemm_acc(acc.data(), widened(a.values()).data(), widened(b.values()).data(), n, k, m);
  return emit<T>("matmul", n, m, narrowed<T>(acc), {a, b}, [a, b, n, k, m](const Tensor<T>&) {
    return Adjoint<T>([a, b, n, k, m](std::span<const double> g, std::span<std::span<double>> gin) {
      if (!gin[0].empty()) gemm_acc(gin[0].data(), g.data(), transposed(b.values(), k, m).data(), n, m, k);
      if (!gin[1].empty()) {
        const std::vector<double> gv(g.begin(), g.end());
        gemm_acc(gin[1].data(), transposed(a.values(), n, k).data(), gv.data(), k, n, m);
      }
    });
  });
}

/// a (n x k) * b^T where b is (m x k).
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  using namespace ops_detail;
  require(a.cols() == b.cols(), "matmul_nt", shapes(a, b));
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  std::vector<double> acc(n * m, 0.0);
  gemm_acc(acc.data(), widened(a.values()).data(), transposed(b.values(), m, k).data(), n, k, m);
  return emit<T>("matmul_nt", n, m, narrowed<T>(acc), {a, b}, [a, b, n, k, m](const Tensor<T>&) {
    return Adjoint<T>([a, b, n, k, m](std::span<const double> g, std::span<std::span<double>> gin) {
      if (!gin[0].empty()) gemm_acc(gin[0].data(), g.data(), widened(b.values()).data(), n, m, k);
      if (!gin[1].empty()) {
        gemm_acc(gin[1].data(), transposed(g, n, m).data(), widened(a.values()).data(), m, n, k);
      }
    });
  });
}

/// Z -> Z Z^T.
template <class T>
Tensor<T> transpose_matmul_self(const Tensor<T>& z) {
  using namespace ops_detail;
  const std::size_t n = z.rows(), k = z.cols();
  std::vector<double> acc(n * n, 0.0);
  gemm_acc(acc.data(), widened(z.values()).data(), transposed(z.values(), n, k).data(), n, k, n);
  return emit<T>("transpose_matmul_self", n, n, narrowed<T>(acc), {z}, [z, n, k](const Tensor<T>&) {
    return Adjoint<T>([z, n, k](std::span<const double> g, std::span<std::span<double>> gin) {
      std::vector<double> sym(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) sym[i * n + j] = g[i * n + j] + g[j * n + i];
      }
      gemm_acc(gin[0].data(), sym.data(), widened(z.values()).data(), n, n, k);
    });
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  using namespace ops_detail;
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return emit<T>("transpose", c, r, std::move(out), {a}, [r, c](const Tensor<T>&) {
    return Adjoint<T>([r, c](std::span<const double> g, std::span<std::span<double>> gin) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += g[j * r + i];
      }
    });
  });
}

/// Sparse (normalized) adjacency times dense features.
template <class T>
Tensor<T> spmm(const NormalizedAdjacency& adj, const Tensor<T>& x) {
  ops_detail::CsrCopy csr{{adj.row_offsets().begin(), adj.row_offsets().end()},
                          {adj.col_indices().begin(), adj.col_indices().end()},
                          {adj.weights().begin(), adj.weights().end()}};
  return ops_detail::spmm_impl(csr, x);
}

/// Unweighted adjacency times dense features.
template <class T>
Tensor<T> spmm(const SparseGraph& graph, const Tensor<T>& x) {
  ops_detail::CsrCopy csr{{graph.row_offsets().begin(), graph.row_offsets().end()},
                          {graph.col_indices().begin(), graph.col_indices().end()},
                          {}};
  return ops_detail::spmm_impl(csr, x);
}

// --- elementwise ------------------------------------------------------------

namespace ops_detail {
/// a (op) b where b is either the same shape or a 1 x cols row broadcast over rows.
template <class T>
Tensor<T> add_sub(const char* op, const Tensor<T>& a, const Tensor<T>& b, double sign) {
  const bool broadcast = b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
  require(a.same_shape(b) || broadcast, op, shapes(a, b));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double bj = bv[broadcast ? j : i * c + j];
      out[i * c + j] = static_cast<T>(static_cast<double>(av[i * c + j]) + sign * bj);
    }
  }
  return emit<T>(op, r, c, std::move(out), {a, b}, [r, c, sign, broadcast](const Tensor<T>&) {
    return Adjoint<T>([r, c, sign, broadcast](std::span<const double> g,
                                              std::span<std::span<double>> gin) {
      if (!gin[0].empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
      }
      if (!gin[1].empty()) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gin[1][broadcast ? j : i * c + j] += sign * g[i * c + j];
        }
      }
    });
  });
}
}  // namespace ops_detail

/// a + b; b may be a 1 x cols row vector broadcast over the rows of a.
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return ops_detail::add_sub("add", a, b, 1.0);
}

/// a - b; b may be a 1 x cols row vector broadcast over the rows of a.
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return ops_detail::add_sub("sub", a, b, -1.0);
}

template <class T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b) {
  using namespace ops_detail;
  require(a.same_shape(b), "elementwise_mul", shapes(a, b));
  std::vector<T> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(av[i]) * static_cast<double>(bv[i]));
  }
  return emit<T>("elementwise_mul", a.rows(), a.cols(), std::move(out), {a, b},
                 [a, b](const Tensor<T>&) {
                   return Adjoint<T>([a, b](std::span<const double> g,
                                            std::span<std::span<double>> gin) {
                     const auto av = a.values();
                     const auto bv = b.values();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       if (!gin[0].empty()) gin[0][i] += g[i] * static_cast<double>(bv[i]);
                       if (!gin[1].empty()) gin[1][i] += g[i] * static_cast<double>(av[i]);
                     }
                   });
                 });
}

template <class T>
Tensor<T> scale(const Tensor<T>& t, double c) {
  return ops_detail::unary<T>(
      "scale", t, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& t, double c) {
  return ops_detail::unary<T>(
      "add_scalar", t, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& t) {
  return ops_detail::unary<T>(
      "relu", t, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// x for x > 0, slope * x otherwise; slope is a trainable 1 x 1 tensor.
template <class T>
Tensor<T> prelu(const Tensor<T>& t, const Tensor<T>& slope) {
  using namespace ops_detail;
  require(slope.rows() == 1 && slope.cols() == 1, "prelu", "slope must be 1x1");
  const double a = static_cast<double>(slope.item());
  std::vector<T> out(t.size());
  const auto tv = t.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = tv[i];
    out[i] = static_cast<T>(x > 0.0 ? x : a * x);
  }
  return emit<T>("prelu", t.rows(), t.cols(), std::move(out), {t, slope}, [t, a](const Tensor<T>&) {
    return Adjoint<T>([t, a](std::span<const double> g, std::span<std::span<double>> gin) {
      const auto tv = t.values();
      double gslope = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = tv[i];
        if (!gin[0].empty()) gin[0][i] += g[i] * (x > 0.0 ? 1.0 : a);
        if (x <= 0.0) gslope += g[i] * x;
      }
      if (!gin[1].empty()) gin[1][0] += gslope;
    });
  });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& t) {
  return ops_detail::unary<T>(
      "sigmoid", t,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

template <class T>
Tensor<T> log(const Tensor<T>& t) {
  return ops_detail::unary<T>(
      "log", t, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& t) {
  return ops_detail::unary<T>(
      "exp", t, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// x^gamma for x >= 0.
template <class T>
Tensor<T> power(const Tensor<T>& t, double gamma) {
  for (T v : t.values()) {
    if (v < T{0}) throw NumericError("power: negative base");
  }
  return ops_detail::unary<T>(
      "power", t, [gamma](double x) { return std::pow(x, gamma); },
      [gamma](double x, double) { return x == 0.0 && gamma < 1.0 ? 0.0 : gamma * std::pow(x, gamma - 1.0); });
}

/// Clamp into [lo, hi]; gradient is zero where the clamp is active.
template <class T>
Tensor<T> clamp(const Tensor<T>& t, double lo, double hi) {
  return ops_detail::unary<T>(
      "clamp", t, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return x >= lo && x <= hi ? 1.0 : 0.0; });
}

// --- row / column structure -------------------------------------------------

/// Each row divided by max(||row||, floor).
template <class T>
Tensor<T> row_l2_normalize(const Tensor<T>& t, double floor = 1e-8) {
  using namespace ops_detail;
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<T> out(r * c);
  std::vector<double> denom(r);
  const auto tv = t.values();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += static_cast<double>(tv[i * c + j]) * tv[i * c + j];
    denom[i] = std::max(std::sqrt(s), floor);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<T>(tv[i * c + j] / denom[i]);
  }
  return emit<T>("row_l2_normalize", r, c, std::move(out), {t},
                 [t, denom = std::move(denom), r, c, floor](const Tensor<T>&) {
                   return Adjoint<T>([t, denom, r, c, floor](std::span<const double> g,
                                                              std::span<std::span<double>> gin) {
                     const auto tv = t.values();
                     for (std::size_t i = 0; i < r; ++i) {
                       const double d = denom[i];
                       const double* gr = g.data() + i * c;
                       double* out = gin[0].data() + i * c;
                       if (d <= floor) {
                         for (std::size_t j = 0; j < c; ++j) out[j] += gr[j] / d;
                         continue;
                       }
                       double dot = 0.0;
                       for (std::size_t j = 0; j < c; ++j) dot += gr[j] * static_cast<double>(tv[i * c + j]);
                       const double d3 = d * d * d;
                       for (std::size_t j = 0; j < c; ++j) {
                         out[j] += gr[j] / d - static_cast<double>(tv[i * c + j]) * dot / d3;
                       }
                     }
                   });
                 });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& t) {
  using namespace ops_detail;
  double s = 0.0;
  for (T v : t.values()) s += static_cast<double>(v);
  return emit<T>("sum_all", 1, 1, {static_cast<T>(s)}, {t}, [](const Tensor<T>&) {
    return Adjoint<T>([](std::span<const double> g, std::span<std::span<double>> gin) {
      for (auto& v : gin[0]) v += g[0];
    });
  });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& t) {
  using namespace ops_detail;
  if (t.size() == 0) throw NumericError("mean_all: empty tensor");
  double s = 0.0;
  for (T v : t.values()) s += static_cast<double>(v);
  const double n = static_cast<double>(t.size());
  return emit<T>("mean_all", 1, 1, {static_cast<T>(s / n)}, {t}, [n](const Tensor<T>&) {
    return Adjoint<T>([n](std::span<const double> g, std::span<std::span<double>> gin) {
      for (auto& v : gin[0]) v += g[0] / n;
    });
  });
}

/// Per-row sums as an (rows x 1) column.
template <class T>
Tensor<T> row_sum(const Tensor<T>& t) {
  using namespace ops_detail;
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<T> out(r);
  const auto tv = t.values();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += static_cast<double>(tv[i * c + j]);
    out[i] = static_cast<T>(s);
  }
  return emit<T>("row_sum", r, 1, std::move(out), {t}, [r, c](const Tensor<T>&) {
    return Adjoint<T>([r, c](std::span<const double> g, std::span<std::span<double>> gin) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += g[i];
      }
    });
  });
}

/// Population variance of each column, as 1 x cols.
template <class T>
Tensor<T> column_variance(const Tensor<T>& t) {
  using namespace ops_detail;
  const std::size_t r = t.rows(), c = t.cols();
  if (r == 0) throw NumericError("column_variance: no rows");
  std::vector<double> mean(c, 0.0);
  const auto tv = t.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) mean[j] += static_cast<double>(tv[i * c + j]);
  }
  for (auto& m : mean) m /= static_cast<double>(r);
  std::vector<double> var(c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = static_cast<double>(tv[i * c + j]) - mean[j];
      var[j] += d * d;
    }
  }
  std::vector<T> out(c);
  for (std::size_t j = 0; j < c; ++j) out[j] = static_cast<T>(var[j] / static_cast<double>(r));
  return emit<T>("column_variance", 1, c, std::move(out), {t},
                 [t, mean = std::move(mean), r, c](const Tensor<T>&) {
                   return Adjoint<T>([t, mean, r, c](std::span<const double> g,
                                                     std::span<std::span<double>> gin) {
                     const auto tv = t.values();
                     const double inv = 2.0 / static_cast<double>(r);
                     for (std::size_t i = 0; i < r; ++i) {
                       for (std::size_t j = 0; j < c; ++j) {
                         gin[0][i * c + j] += g[j] * inv * (static_cast<double>(tv[i * c + j]) - mean[j]);
                       }
                     }
                   });
                 });
}

/// log(sum_j exp(t_ij)) per row over entries with keep[i*cols+j] != 0 (all
/// entries when keep is empty), stabilized by subtracting the row max.
template <class T>
Tensor<T> row_logsumexp(const Tensor<T>& t, std::vector<std::uint8_t> keep = {}) {
  using namespace ops_detail;
  const std::size_t r = t.rows(), c = t.cols();
  require(keep.empty() || keep.size() == t.size(), "row_logsumexp", "mask size mismatch");
  std::vector<T> out(r);
  std::vector<double> lse(r);
  const auto tv = t.values();
  auto kept = [&keep](std::size_t idx) { return keep.empty() || keep[idx] != 0; };
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t count = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (kept(i * c + j)) {
        mx = std::max(mx, static_cast<double>(tv[i * c + j]));
        ++count;
      }
    }
    if (count == 0) throw NumericError("row_logsumexp: row with no kept entries");
    if (!std::isfinite(mx)) {
      // Non-finite input propagates; the caller reports it.
      lse[i] = std::numeric_limits<double>::quiet_NaN();
      out[i] = static_cast<T>(lse[i]);
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (kept(i * c + j)) s += std::exp(static_cast<double>(tv[i * c + j]) - mx);
    }
    lse[i] = mx + std::log(s);
    out[i] = static_cast<T>(lse[i]);
  }
  return emit<T>("row_logsumexp", r, 1, std::move(out), {t},
                 [t, keep = std::move(keep), lse = std::move(lse), r, c](const Tensor<T>&) {
                   return Adjoint<T>([t, keep, lse, r, c](std::span<const double> g,
                                                          std::span<std::span<double>> gin) {
                     const auto tv = t.values();
                     for (std::size_t i = 0; i < r; ++i) {
                       for (std::size_t j = 0; j < c; ++j) {
                         const std::size_t idx = i * c + j;
                         if (!keep.empty() && keep[idx] == 0) continue;
                         gin[0][idx] += g[i] * std::exp(static_cast<double>(tv[idx]) - lse[i]);
                       }
                     }
                   });
                 });
}

/// Rows of t at `index`, in that order (duplicates allowed).
template <class T>
Tensor<T> gather_rows(const Tensor<T>& t, std::span<const NodeId> index) {
  using namespace ops_detail;
  const std::size_t c = t.cols();
  std::vector<T> out(index.size() * c);
  const auto tv = t.values();
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < t.rows(), "gather_rows", "index out of range");
    std::copy_n(tv.data() + static_cast<std::size_t>(index[k]) * c, c, out.data() + k * c);
  }
  std::vector<NodeId> idx(index.begin(), index.end());
  return emit<T>("gather_rows", index.size(), c, std::move(out), {t},
                 [idx = std::move(idx), c](const Tensor<T>&) {
                   return Adjoint<T>([idx, c](std::span<const double> g,
                                              std::span<std::span<double>> gin) {
                     for (std::size_t k = 0; k < idx.size(); ++k) {
                       double* dst = gin[0].data() + static_cast<std::size_t>(idx[k]) * c;
                       for (std::size_t j = 0; j < c; ++j) dst[j] += g[k * c + j];
                     }
                   });
                 });
}

/// Copy of t with every row in `index` set to `value`; no gradient flows
/// into the overwritten rows.
template <class T>
Tensor<T> masked_fill_rows(const Tensor<T>& t, std::span<const NodeId> index, T value) {
  using namespace ops_detail;
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<std::uint8_t> filled(r, 0);
  for (NodeId i : index) {
    require(i < r, "masked_fill_rows", "index out of range");
    filled[i] = 1;
  }
  std::vector<T> out(t.values().begin(), t.values().end());
  for (std::size_t i = 0; i < r; ++i) {
    if (filled[i]) std::fill_n(out.data() + i * c, c, value);
  }
  return emit<T>("masked_fill_rows", r, c, std::move(out), {t},
                 [filled = std::move(filled), r, c](const Tensor<T>&) {
                   return Adjoint<T>([filled, r, c](std::span<const double> g,
                                                    std::span<std::span<double>> gin) {
                     for (std::size_t i = 0; i < r; ++i) {
                       if (filled[i]) continue;
                       for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += g[i * c + j];
                     }
                   });
                 });
}

/// [a | b] side by side.
template <class T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  using namespace ops_detail;
  require(a.rows() == b.rows(), "concat_cols", shapes(a, b));
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.values().data() + i * ca, ca, out.data() + i * c);
    std::copy_n(b.values().data() + i * cb, cb, out.data() + i * c + ca);
  }
  return emit<T>("concat_cols", r, c, std::move(out), {a, b}, [r, ca, cb, c](const Tensor<T>&) {
    return Adjoint<T>([r, ca, cb, c](std::span<const double> g, std::span<std::span<double>> gin) {
      for (std::size_t i = 0; i < r; ++i) {
        if (!gin[0].empty()) {
          for (std::size_t j = 0; j < ca; ++j) gin[0][i * ca + j] += g[i * c + j];
        }
        if (!gin[1].empty()) {
          for (std::size_t j = 0; j < cb; ++j) gin[1][i * cb + j] += g[i * c + ca + j];
        }
      }
    });
  });
}

/// ||z_i - z_j||^2 for all row pairs, as n x n.
template <class T>
Tensor<T> pairwise_sq_dist(const Tensor<T>& z) {
  using namespace ops_detail;
  const std::size_t n = z.rows(), k = z.cols();
  std::vector<T> out(n * n);
  const auto zv = z.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double d = static_cast<double>(zv[i * k + p]) - static_cast<double>(zv[j * k + p]);
        s += d * d;
      }
      out[i * n + j] = static_cast<T>(s);
      out[j * n + i] = static_cast<T>(s);
    }
  }
  return emit<T>("pairwise_sq_dist", n, n, std::move(out), {z}, [z, n, k](const Tensor<T>&) {
    return Adjoint<T>([z, n, k](std::span<const double> g, std::span<std::span<double>> gin) {
      const auto zv = z.values();
      for (std::size_t i = 0; i < n; ++i) {
        double* gi = gin[0].data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double s = 2.0 * (g[i * n + j] + g[j * n + i]);
          if (s == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) {
            gi[p] += s * (static_cast<double>(zv[i * k + p]) - static_cast<double>(zv[j * k + p]));
          }
        }
      }
    });
  });
}

/// Elementwise (1 - t) without a broadcast constant.
template <class T>
Tensor<T> one_minus(const Tensor<T>& t) {
  return ops_detail::unary<T>(
      "one_minus", t, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

}  // namespace gcmae
