// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcmae/augment.hpp"
#include "gcmae/config.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/ops.hpp"
#include "gcmae/rng.hpp"

namespace gcmae {

/// A trainable tensor plus its Adam moment shadows.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> first_moment;
  std::vector<T> second_moment;
};

/// Dimensions a parameter set is built for.
struct ModelShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t proj_dim = 0;
  std::size_t depth = 0;
  EncoderMode mode = EncoderMode::shared;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

inline ModelShape model_shape(const TrainConfig& c, std::size_t input_dim) {
  return {input_dim, static_cast<std::size_t>(c.hidden_dim),
          static_cast<std::size_t>(c.projection_dim()), static_cast<std::size_t>(c.depth),
          c.encoder_mode};
}

inline bool has_mae_encoder(EncoderMode m) { return m != EncoderMode::contrastive_only; }
inline bool has_contrastive_encoder(EncoderMode m) {
  return m == EncoderMode::contrastive_only || m == EncoderMode::fusion;
}
inline bool has_decoder(EncoderMode m) { return m != EncoderMode::contrastive_only; }
inline bool has_projectors(EncoderMode m) { return m != EncoderMode::mae_only; }

// Parameter-name prefixes.
inline constexpr std::string_view kEncoder = "enc";
inline constexpr std::string_view kContrastiveEncoder = "enc_con";
inline constexpr std::string_view kDecoder = "dec";
inline constexpr std::string_view kProjector1 = "proj1";
inline constexpr std::string_view kProjector2 = "proj2";

/// All trainable weights in a fixed order, addressable by name.
template <class T>
class ModelParams {
 public:
  ModelParams() = default;

  void add(std::string name, Tensor<T> value) {
    if (index_.count(name) != 0) throw ConfigError("duplicate parameter '" + name + "'");
    index_[name] = params_.size();
    const std::size_t n = value.size();
    params_.push_back({std::move(name), std::move(value), std::vector<T>(n, T{0}),
                       std::vector<T>(n, T{0})});
  }

  const Tensor<T>& get(std::string_view name) const { return params_.at(find(name)).value; }
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  Parameter<T>& at(std::string_view name) { return params_.at(find(name)); }
  const Parameter<T>& at(std::string_view name) const { return params_.at(find(name)); }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  ModelShape shape;
  std::uint64_t step = 0;  // Adam steps taken

 private:
  std::size_t find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("no parameter named '" + std::string(name) + "'");
    return it->second;
  }

  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

namespace model_detail {

template <class T>
Tensor<T> glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> w(fan_in * fan_out);
  for (auto& v : w) v = static_cast<T>(bound * (2.0 * uniform01(rng) - 1.0));
  return Tensor<T>::parameter(fan_in, fan_out, std::move(w));
}

template <class T>
Tensor<T> slope() {
  return Tensor<T>::parameter(1, 1, {static_cast<T>(0.25)});
}

inline std::string key(std::string_view prefix, std::string_view what, std::size_t layer) {
  return std::string(prefix) + "." + std::string(what) + std::to_string(layer);
}

template <class T>
void add_encoder(ModelParams<T>& p, std::string_view prefix, const ModelShape& s, Rng& rng) {
  for (std::size_t l = 0; l < s.depth; ++l) {
    const std::size_t in = l == 0 ? s.input_dim : s.hidden_dim;
    p.add(key(prefix, "w", l), glorot<T>(in, s.hidden_dim, rng));
    p.add(key(prefix, "a", l), slope<T>());
  }
}

template <class T>
void add_projector(ModelParams<T>& p, std::string_view prefix, const ModelShape& s, Rng& rng) {
  p.add(key(prefix, "w", 0), glorot<T>(s.hidden_dim, s.hidden_dim, rng));
  p.add(key(prefix, "b", 0), Tensor<T>::parameter(1, s.hidden_dim, std::vector<T>(s.hidden_dim)));
  p.add(key(prefix, "a", 0), slope<T>());
  p.add(key(prefix, "w", 1), glorot<T>(s.hidden_dim, s.proj_dim, rng));
  p.add(key(prefix, "b", 1), Tensor<T>::parameter(1, s.proj_dim, std::vector<T>(s.proj_dim)));
  p.add(key(prefix, "a", 1), slope<T>());
}

}  // namespace model_detail

/// Glorot-uniform weights, zero biases, PReLU slopes 0.25, zero moments.
/// Each sub-network draws from its own seeded stream, so the optional second
/// encoder is independent of the first.
template <class T>
ModelParams<T> init_params(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.proj_dim == 0 || shape.depth == 0) {
    throw ConfigError("init_params: dimensions and depth must be positive");
  }
  using namespace model_detail;
  ModelParams<T> p;
  p.shape = shape;
  if (has_mae_encoder(shape.mode)) {
    Rng rng = make_rng(seed, Stream::init, {1});
    add_encoder(p, kEncoder, shape, rng);
  }
  if (has_contrastive_encoder(shape.mode)) {
    Rng rng = make_rng(seed, Stream::init, {2});
    add_encoder(p, kContrastiveEncoder, shape, rng);
  }
  if (has_decoder(shape.mode)) {
    Rng rng = make_rng(seed, Stream::init, {3});
    p.add(std::string(kDecoder) + ".w0", glorot<T>(shape.hidden_dim, shape.input_dim, rng));
  }
  if (has_projectors(shape.mode)) {
    Rng rng1 = make_rng(seed, Stream::init, {4});
    add_projector(p, kProjector1, shape, rng1);
    Rng rng2 = make_rng(seed, Stream::init, {5});
    add_projector(p, kProjector2, shape, rng2);
  }
  return p;
}

template <class T>
ModelParams<T> init_params(const TrainConfig& config, std::size_t input_dim) {
  return init_params<T>(model_shape(config, input_dim), config.seed);
}

/// GCN stack: H <- prelu(A_norm (H W_l)) for each layer; no bias terms.
template <class T>
Tensor<T> encode(const ModelParams<T>& params, std::string_view prefix,
                 const NormalizedAdjacency& adj, const Tensor<T>& x) {
  if (x.cols() != params.shape.input_dim) {
    throw ShapeError("encode: expected " + std::to_string(params.shape.input_dim) +
                     " feature columns, got " + std::to_string(x.cols()));
  }
  Tensor<T> h = x;
  for (std::size_t l = 0; l < params.shape.depth; ++l) {
    h = prelu(spmm(adj, matmul(h, params.get(model_detail::key(prefix, "w", l)))),
              params.get(model_detail::key(prefix, "a", l)));
  }
  return h;
}

/// Single propagation layer back to the input feature width; linear output.
template <class T>
Tensor<T> decode(const ModelParams<T>& params, const NormalizedAdjacency& adj, const Tensor<T>& h) {
  return spmm(adj, matmul(h, params.get(std::string(kDecoder) + ".w0")));
}

/// sigma(W2 sigma(W1 h + b1) + b2) for projector 1 or 2.
template <class T>
Tensor<T> project(const ModelParams<T>& params, const Tensor<T>& h, int which) {
  if (which != 1 && which != 2) throw ConfigError("project: which must be 1 or 2");
  const std::string_view prefix = which == 1 ? kProjector1 : kProjector2;
  using model_detail::key;
  Tensor<T> hidden = prelu(add(matmul(h, params.get(key(prefix, "w", 0))), params.get(key(prefix, "b", 0))),
                           params.get(key(prefix, "a", 0)));
  return prelu(add(matmul(hidden, params.get(key(prefix, "w", 1))), params.get(key(prefix, "b", 1))),
               params.get(key(prefix, "a", 1)));
}

template <class T>
struct ForwardOutputs {
  Tensor<T> h1;                   // masked-view embedding of the MAE (or only) encoder
  std::optional<Tensor<T>> h2;    // drop-view embedding
  std::optional<Tensor<T>> z;     // decoder output
  std::optional<Tensor<T>> u;     // projected h1 (contrastive encoder's h1 in fusion)
  std::optional<Tensor<T>> v;     // projected h2
};

/// Inputs of one training step: the two corrupted views plus the clean graph.
template <class T>
struct Views {
  const NormalizedAdjacency& adj;       // clean graph, feeds the masked view and the decoder
  const NormalizedAdjacency& drop_adj;  // node-dropped graph
  const Tensor<T>& features;            // clean X
  const Tensor<T>& masked_features;     // X with masked rows zeroed
  const MaskPlan& mask;
  bool remask_decoder = false;
};

template <class T>
ForwardOutputs<T> forward(const ModelParams<T>& params, const Views<T>& views) {
  const EncoderMode mode = params.shape.mode;
  ForwardOutputs<T> out;
  const std::string_view primary = has_mae_encoder(mode) ? kEncoder : kContrastiveEncoder;
  out.h1 = encode(params, primary, views.adj, views.masked_features);

  if (has_decoder(mode)) {
    Tensor<T> dec_in = out.h1;
    if (views.remask_decoder) {
      dec_in = masked_fill_rows(dec_in, std::span<const NodeId>(views.mask.masked_nodes), T{0});
    }
    out.z = decode(params, views.adj, dec_in);
  }

  if (has_projectors(mode)) {
    // Shared and contrastive-only modes reuse the single encoder; fusion
    // trains its separate contrastive encoder on both views.
    const std::string_view con = has_contrastive_encoder(mode) ? kContrastiveEncoder : kEncoder;
    const Tensor<T> h1_con =
        mode == EncoderMode::fusion ? encode(params, con, views.adj, views.masked_features) : out.h1;
    out.h2 = encode(params, con, views.drop_adj, views.features);
    out.u = project(params, h1_con, 1);
    out.v = project(params, *out.h2, 2);
  }
  return out;
}

/// Frozen embedding used by every downstream task: the encoder on the clean
/// graph and features; fusion averages its two encoders.
template <class T>
Tensor<T> embed(const ModelParams<T>& params, const NormalizedAdjacency& adj, const Tensor<T>& x) {
  switch (params.shape.mode) {
    case EncoderMode::shared:
    case EncoderMode::mae_only: return encode(params, kEncoder, adj, x);
    case EncoderMode::contrastive_only: return encode(params, kContrastiveEncoder, adj, x);
    case EncoderMode::fusion:
      return scale(add(encode(params, kEncoder, adj, x), encode(params, kContrastiveEncoder, adj, x)),
                   0.5);
  }
  throw ConfigError("embed: unknown mode");
}

/// Decoder output on the clean graph; the link-prediction head scores pairs from it.
template <class T>
Tensor<T> reconstruct(const ModelParams<T>& params, const NormalizedAdjacency& adj, const Tensor<T>& x) {
  if (!has_decoder(params.shape.mode)) throw ConfigError("reconstruct: mode has no decoder");
  return decode(params, adj, encode(params, kEncoder, adj, x));
}

}  // namespace gcmae
