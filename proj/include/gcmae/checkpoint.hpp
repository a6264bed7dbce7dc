// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

// Binary layout: the 6 bytes "GCMAE1", then records until EOF, each
//   u32 name length | name bytes | u32 rows | u32 cols | rows*cols f32
// with every integer and float little-endian. Weights come first in model
// order; Adam moments follow as "<name>#m" / "<name>#v"; "meta.*" records
// carry the model shape, step count and config hash as small integers.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "gcmae/error.hpp"
#include "gcmae/model.hpp"

namespace gcmae {

inline constexpr std::string_view kCheckpointMagic = "GCMAE1";

struct Checkpoint {
  ModelParams<float> params;
  std::uint64_t config_hash = 0;
};

namespace checkpoint_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  bool done() const { return pos == data.size(); }
  void need(std::size_t n) const {
    if (data.size() - pos < n) throw DataError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

struct Record {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;
};

inline void put_record(std::string& out, std::string_view name, std::size_t rows, std::size_t cols,
                       std::span<const float> values) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

/// Integers split into 16-bit chunks; each chunk is exact in float32.
inline std::vector<float> pack_u64(std::uint64_t v, int chunks) {
  std::vector<float> out;
  for (int i = 0; i < chunks; ++i) out.push_back(static_cast<float>((v >> (16 * i)) & 0xFFFFU));
  return out;
}

inline std::uint64_t unpack_u64(const std::vector<float>& chunks) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const float c = chunks[i];
    if (!(c >= 0.0F && c <= 65535.0F) || c != static_cast<float>(static_cast<std::uint32_t>(c))) {
      throw DataError("checkpoint: malformed integer record");
    }
    v |= static_cast<std::uint64_t>(c) << (16 * i);
  }
  return v;
}

inline int mode_index(EncoderMode m) { return static_cast<int>(m); }

inline EncoderMode mode_from_index(std::uint64_t i) {
  if (i > 3) throw DataError("checkpoint: unknown encoder mode");
  return static_cast<EncoderMode>(i);
}

}  // namespace checkpoint_detail

inline std::string serialize_checkpoint(const ModelParams<float>& params, std::uint64_t config_hash) {
  using namespace checkpoint_detail;
  std::string out(kCheckpointMagic);
  for (const auto& p : params.all()) {
    put_record(out, p.name, p.value.rows(), p.value.cols(), p.value.values());
  }
  for (const auto& p : params.all()) {
    put_record(out, p.name + "#m", p.value.rows(), p.value.cols(), p.first_moment);
    put_record(out, p.name + "#v", p.value.rows(), p.value.cols(), p.second_moment);
  }
  const auto& s = params.shape;
  const std::vector<float> shape{static_cast<float>(s.input_dim), static_cast<float>(s.hidden_dim),
                                 static_cast<float>(s.proj_dim), static_cast<float>(s.depth),
                                 static_cast<float>(mode_index(s.mode))};
  put_record(out, "meta.shape", 1, shape.size(), shape);
  const auto step = pack_u64(params.step, 4);
  put_record(out, "meta.step", 1, step.size(), step);
  const auto hash = pack_u64(config_hash, 4);
  put_record(out, "meta.config_hash", 1, hash.size(), hash);
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& data) {
  using namespace checkpoint_detail;
  if (data.size() < kCheckpointMagic.size() ||
      std::string_view(data).substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw DataError("checkpoint: bad magic");
  }
  Reader r{data, kCheckpointMagic.size()};
  std::vector<Record> records;
  while (!r.done()) {
    Record rec;
    rec.name = r.bytes(r.u32());
    rec.rows = r.u32();
    rec.cols = r.u32();
    const std::size_t n = static_cast<std::size_t>(rec.rows) * rec.cols;
    r.need(4 * n);
    rec.values.resize(n);
    for (auto& v : rec.values) v = std::bit_cast<float>(r.u32());
    records.push_back(std::move(rec));
  }

  Checkpoint ck;
  bool have_shape = false;
  std::map<std::string, const Record*> moments;
  for (const auto& rec : records) {
    if (rec.name == "meta.shape") {
      if (rec.values.size() != 5) throw DataError("checkpoint: malformed meta.shape");
      auto& s = ck.params.shape;
      s.input_dim = static_cast<std::size_t>(rec.values[0]);
      s.hidden_dim = static_cast<std::size_t>(rec.values[1]);
      s.proj_dim = static_cast<std::size_t>(rec.values[2]);
      s.depth = static_cast<std::size_t>(rec.values[3]);
      s.mode = mode_from_index(static_cast<std::uint64_t>(rec.values[4]));
      have_shape = true;
    } else if (rec.name == "meta.step") {
      ck.params.step = unpack_u64(rec.values);
    } else if (rec.name == "meta.config_hash") {
      ck.config_hash = unpack_u64(rec.values);
    } else if (rec.name.find('#') != std::string::npos) {
      moments[rec.name] = &rec;
    } else {
      ck.params.add(rec.name, Tensor<float>::parameter(rec.rows, rec.cols, rec.values));
    }
  }
  if (!have_shape) throw DataError("checkpoint: missing meta.shape");
  for (auto& p : ck.params.all()) {
    for (const char* suffix : {"#m", "#v"}) {
      auto it = moments.find(p.name + suffix);
      if (it == moments.end()) throw DataError("checkpoint: missing moment for " + p.name);
      if (it->second->values.size() != p.value.size()) {
        throw DataError("checkpoint: moment shape mismatch for " + p.name);
      }
      (suffix[1] == 'm' ? p.first_moment : p.second_moment) = it->second->values;
    }
  }
  return ck;
}

inline void save_checkpoint(const ModelParams<float>& params, std::uint64_t config_hash,
                            const std::string& path) {
  const std::string bytes = serialize_checkpoint(params, config_hash);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(data);
}

/// Throws ShapeError unless the checkpoint holds exactly the parameters a
/// fresh model of `expected` shape would have.
inline void require_compatible(const ModelParams<float>& loaded, const ModelShape& expected) {
  const auto reference = init_params<float>(expected, 0);
  if (!(loaded.shape == expected)) throw ShapeError("checkpoint: model shape differs from config");
  if (loaded.size() != reference.size()) throw ShapeError("checkpoint: parameter count differs");
  for (const auto& p : reference.all()) {
    if (!loaded.contains(p.name)) throw ShapeError("checkpoint: missing parameter " + p.name);
    if (!loaded.get(p.name).same_shape(p.value)) {
      throw ShapeError("checkpoint: shape mismatch for " + p.name);
    }
  }
}

}  // namespace gcmae
