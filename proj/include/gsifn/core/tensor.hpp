// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gsifn/core/error.hpp"

namespace gsifn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t numel(const Shape& shape);

template <class T>
class Tape;

/// Dense row-major tensor. Storage is shared and immutable once built, so copies
/// are cheap and saved activations on the tape never alias a later write.
/// A tensor optionally carries a handle into the tape that produced it.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one dim");
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape_));
    }
    if (numel(shape_) != values.size()) {
      throw ShapeError("shape " + shape_str(shape_) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

  static Tensor full(Shape shape, T value) {
    std::vector<T> v(numel(shape), value);
    return Tensor(std::move(shape), std::move(v));
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  /// Row vector (1 x n).
  static Tensor row(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
  }

  /// Column vector (n x 1).
  static Tensor column(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({n, 1}, std::move(values));
  }

  static Tensor identity(std::size_t n) {
    auto t = zeros({n, n});
    auto& v = t.mutable_values();
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = T(1);
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  /// Rows/cols of a rank-2 tensor.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  std::span<const T> values() const { return {data_->data(), data_->size()}; }
  const T* data() const { return data_->data(); }
  const std::shared_ptr<std::vector<T>>& storage() const { return data_; }

  T operator[](std::size_t i) const { return (*data_)[i]; }
  T at(std::size_t r, std::size_t c) const { return (*data_)[r * shape_.at(1) + c]; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  /// Writable storage. Copies on write when shared and drops any tape handle,
  /// since the result no longer equals the recorded value.
  std::vector<T>& mutable_values() {
    if (!data_) throw ShapeError("mutable_values() on undefined tensor");
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
    tape_ = nullptr;
    return *data_;
  }

  bool tracked() const { return tape_ != nullptr; }
  std::size_t node() const { return node_; }
  Tape<T>* tape() const { return tape_; }

  Tensor detach() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    return t;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> v(size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>(shape_, std::move(v));
  }

  std::vector<T> to_vector() const { return *data_; }

 private:
  friend class Tape<T>;

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Leaf gradients produced by Tape::backward.
template <class T>
class Gradients {
 public:
  /// Gradient for a watched leaf; zeros when the loss does not depend on it.
  Tensor<T> of(const Tensor<T>& leaf) const {
    auto it = grads_.find(leaf.node());
    if (!leaf.tracked() || it == grads_.end()) return Tensor<T>::zeros(leaf.shape());
    return Tensor<T>(leaf.shape(), it->second);
  }

  bool contains(const Tensor<T>& leaf) const {
    return leaf.tracked() && grads_.count(leaf.node()) > 0;
  }

 private:
  friend class Tape<T>;
  std::unordered_map<std::size_t, std::vector<T>> grads_;
};

/// Reverse-mode tape. Records are appended in execution order, so the record
/// list is already topologically sorted; backward walks it once in reverse.
/// Tensors hold a raw pointer to their tape: a tape must outlive every tensor
/// recorded on it and is neither copyable nor movable.
template <class T>
class Tape {
 public:
  /// Receives the output gradient and one slot per input (nullptr when that
  /// input is untracked), and accumulates into the slots.
  using GradFn = std::function<void(std::span<const T>, std::span<std::vector<T>* const>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> watch(const Tensor<T>& value) {
    check_open();
    Tensor<T> t = value.detach();
    t.tape_ = this;
    t.node_ = nodes_.size();
    nodes_.push_back(Node{value.size(), true, {}, {}});
    return t;
  }

  /// Appends a record for `output` computed from `inputs`. Returns `output`
  /// tagged with its node when any input is tracked, untouched otherwise.
  Tensor<T> record(Tensor<T> output, std::initializer_list<const Tensor<T>*> inputs, GradFn fn) {
    return record(std::move(output), std::vector<const Tensor<T>*>(inputs), std::move(fn));
  }

  Tensor<T> record(Tensor<T> output, const std::vector<const Tensor<T>*>& inputs, GradFn fn) {
    check_open();
    Node node{output.size(), false, {}, std::move(fn)};
    node.inputs.reserve(inputs.size());
    for (const auto* in : inputs) {
      if (in->tracked() && in->tape() != this) {
        throw Error("tape", "inputs recorded on different tapes");
      }
      node.inputs.push_back(in->tracked() ? static_cast<long>(in->node()) : -1L);
    }
    output.tape_ = this;
    output.node_ = nodes_.size();
    nodes_.push_back(std::move(node));
    return output;
  }

  /// Gradients of a scalar loss with respect to every watched leaf. Consumes
  /// the tape: records (and their saved activations) are released afterwards.
  Gradients<T> backward(const Tensor<T>& loss) {
    check_open();
    if (loss.size() != 1) {
      throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (loss.tape() != this) throw Error("tape", "loss is not tracked on this tape");

    std::vector<std::vector<T>> grads(nodes_.size());
    grads[loss.node()].assign(1, T(1));
    std::vector<std::vector<T>*> slots;
    for (std::size_t id = loss.node() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (grads[id].empty() || node.leaf) continue;
      slots.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const long in = node.inputs[k];
        if (in < 0) continue;
        auto& g = grads[static_cast<std::size_t>(in)];
        if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(in)].size, T(0));
        slots[k] = &g;
      }
      node.backward(std::span<const T>(grads[id]), std::span<std::vector<T>* const>(slots));
      std::vector<T>().swap(grads[id]);
      node.backward = nullptr;
    }

    Gradients<T> out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      if (nodes_[id].leaf && !grads[id].empty()) out.grads_.emplace(id, std::move(grads[id]));
    }
    nodes_.clear();
    consumed_ = true;
    return out;
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::size_t size;
    bool leaf;
    std::vector<long> inputs;
    GradFn backward;
  };

  void check_open() const {
    if (consumed_) throw Error("tape", "tape already consumed by backward()");
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace gsifn
