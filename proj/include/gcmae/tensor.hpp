// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gcmae/error.hpp"

namespace gcmae {

namespace detail {
inline std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Dense row-major 2-D tensor. Values are immutable once constructed and
/// shared between copies; every tensor carries an identity used by the tape
/// and by gradient lookups.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(0, 0) {}

  Tensor(std::size_t rows, std::size_t cols)
      : Tensor(rows, cols, std::vector<T>(rows * cols, T{0})) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows),
        cols_(cols),
        data_(std::make_shared<const std::vector<T>>(std::move(values))),
        id_(detail::next_tensor_id()) {
    if (data_->size() != rows * cols) {
      throw ShapeError("tensor: value count " + std::to_string(data_->size()) +
                       " does not match shape " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("tensor: ragged initializer");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(v));
  }

  /// Trainable leaf.
  static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<T> values) {
    Tensor t(rows, cols, std::move(values));
    t.requires_grad_ = true;
    return t;
  }

  static Tensor scalar(T value) { return Tensor(1, 1, std::vector<T>{value}); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  bool requires_grad() const { return requires_grad_; }
  std::uint64_t id() const { return id_; }

  std::span<const T> values() const { return {data_->data(), data_->size()}; }
  std::span<const T> row(std::size_t r) const { return {data_->data() + r * cols_, cols_}; }
  T operator()(std::size_t r, std::size_t c) const { return (*data_)[r * cols_ + c]; }
  T item() const {
    if (size() != 1) throw ShapeError("tensor: item() on non-scalar");
    return (*data_)[0];
  }

  /// Same values, cut from any recorded history.
  Tensor detached() const { return Tensor(rows_, cols_, *data_); }

  /// New values under the same identity; the optimizer uses this to update leaves.
  Tensor with_values(std::vector<T> values) const {
    Tensor t = *this;
    if (values.size() != size()) throw ShapeError("tensor: with_values size mismatch");
    t.data_ = std::make_shared<const std::vector<T>>(std::move(values));
    return t;
  }

  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  /// Output of a recorded op; marks it as differentiable.
  static Tensor recorded(std::size_t rows, std::size_t cols, std::vector<T> values) {
    Tensor t(rows, cols, std::move(values));
    t.requires_grad_ = true;
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::shared_ptr<const std::vector<T>> data_;
  bool requires_grad_ = false;
  std::uint64_t id_ = 0;
};

/// Gradients keyed by tensor identity. Leaves the backward pass never
/// reached read back as zeros of the leaf's shape.
template <class T>
class Gradients {
 public:
  Tensor<T> of(const Tensor<T>& leaf) const {
    const auto* g = raw(leaf.id());
    if (g == nullptr) return Tensor<T>(leaf.rows(), leaf.cols());
    if (g->size() != leaf.size()) throw ShapeError("gradients: shape mismatch for leaf");
    std::vector<T> v(g->begin(), g->end());
    return Tensor<T>(leaf.rows(), leaf.cols(), std::move(v));
  }

  /// 64-bit accumulator for a tensor id, or nullptr when unreached.
  const std::vector<double>* raw(std::uint64_t id) const {
    auto it = grads_.find(id);
    return it == grads_.end() ? nullptr : &it->second;
  }

  bool reached(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }

 private:
  template <class>
  friend class Tape;
  std::unordered_map<std::uint64_t, std::vector<double>> grads_;
};

/// Ordered record of primitive applications. One tape is active per thread
/// while a Recording guard is alive; ops applied to differentiable inputs
/// append to it. Backward walks the records in exact reverse order.
template <class T>
class Tape {
 public:
  /// Receives the output adjoint and one buffer per input; a buffer is empty
  /// when that input does not need a gradient.
  using Adjoint =
      std::function<void(std::span<const double> grad_out, std::span<std::span<double>> grad_in)>;

  struct Input {
    std::uint64_t id;
    std::size_t size;
    bool requires_grad;
  };

  class Recording {
   public:
    explicit Recording(Tape& tape) : previous_(current()) { current() = &tape; }
    ~Recording() { current() = previous_; }
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return current(); }

  void record(std::vector<Input> inputs, const Tensor<T>& output, Adjoint adjoint) {
    if (consumed_) throw NumericError("tape: recording onto a consumed tape");
    records_.push_back({std::move(inputs), output.id(), output.size(), std::move(adjoint)});
  }

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  /// Drops every record and the activations they saved.
  void clear() {
    records_.clear();
    records_.shrink_to_fit();
    consumed_ = false;
  }

  Gradients<T> backward(const Tensor<T>& output) {
    if (consumed_) throw NumericError("backward: tape already consumed");
    if (output.size() != 1) {
      throw ShapeError("backward: output must be 1x1, got " + output.shape_string());
    }
    bool on_tape = false;
    for (const auto& r : records_) on_tape = on_tape || r.output == output.id();
    if (!on_tape) throw NumericError("backward: output was not recorded on this tape");

    Gradients<T> result;
    auto& grads = result.grads_;
    grads[output.id()] = std::vector<double>{1.0};

    std::vector<std::span<double>> buffers;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      auto out = grads.find(it->output);
      if (out == grads.end()) continue;
      // Copy: the output adjoint buffer may be rehashed while inputs are inserted.
      const std::vector<double> grad_out = out->second;
      buffers.clear();
      for (const auto& in : it->inputs) {
        if (!in.requires_grad) {
          buffers.emplace_back();
          continue;
        }
        auto& g = grads[in.id];
        if (g.empty()) g.assign(in.size, 0.0);
        buffers.emplace_back(g);
      }
      // Spans stay valid: unordered_map never relocates mapped values.
      it->adjoint(grad_out, buffers);
    }
    consumed_ = true;
    records_.clear();
    return result;
  }

 private:
  struct Record {
    std::vector<Input> inputs;
    std::uint64_t output;
    std::size_t output_size;
    Adjoint adjoint;
  };

  static Tape*& current() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  std::vector<Record> records_;
  bool consumed_ = false;
};

/// Convenience: gradients of `output` on the currently active tape.
template <class T>
Gradients<T> backward(Tape<T>& tape, const Tensor<T>& output) {
  return tape.backward(output);
}

}  // namespace gcmae
