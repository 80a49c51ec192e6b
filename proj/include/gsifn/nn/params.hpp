// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gsifn/core/rng.hpp"
#include "gsifn/core/tensor.hpp"

namespace gsifn {

/// Optimizer groups, each with its own learning rate and weight decay.
/// `text` holds the text encoder, `vision`/`audio` the non-verbal encoders and
/// temporal enhancers, `other` everything else.
enum class ParamGroup { text, vision, audio, other };

std::string to_string(ParamGroup g);

using ParamId = std::size_t;

template <class T>
struct Param {
  std::string name;
  ParamGroup group;
  Tensor<T> value;
};

/// Flat, ordered registry of learnable tensors. Names are dotted paths
/// ("gsit.forward.l0.attn.q.w"); order of registration is stable and defines
/// checkpoint layout.
template <class T>
class ParamSet {
 public:
  ParamId add(std::string name, ParamGroup group, Tensor<T> init) {
    if (index_.count(name)) throw Error("params", "duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), group, std::move(init)});
    return params_.size() - 1;
  }

  /// Glorot-uniform weight of the given shape; fans are the first and last dim.
  ParamId add_glorot(std::string name, ParamGroup group, Shape shape, Rng& rng) {
    std::size_t fan_in = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
    const std::size_t fan_out = shape.back();
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
    return add(std::move(name), group, Tensor<T>(std::move(shape), std::move(v)));
  }

  ParamId add_constant(std::string name, ParamGroup group, Shape shape, T value) {
    return add(std::move(name), group, Tensor<T>::full(std::move(shape), value));
  }

  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](ParamId id) { return params_.at(id); }
  const Param<T>& operator[](ParamId id) const { return params_.at(id); }

  ParamId id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("params", "no parameter named " + name);
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.group, p.value.template cast<U>());
    return out;
  }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Param<T>> params_;
  std::map<std::string, ParamId> index_;
};

enum class DropoutPosition { post_softmax, pre_softmax };

/// Per-forward-pass state: parameter resolution (plain values, or tape-watched
/// copies after bind()), the train/eval switch and the dropout stream.
template <class T>
class Context {
 public:
  explicit Context(const ParamSet<T>& params, bool train = false, Rng rng = Rng(0))
      : train(train), rng(rng), params_(&params) {}

  /// Watches every parameter on `tape`; later lookups return the tracked copies.
  void bind(Tape<T>& tape) {
    bound_.clear();
    bound_.reserve(params_->size());
    for (const auto& p : *params_) bound_.push_back(tape.watch(p.value));
  }

  const Tensor<T>& operator[](ParamId id) const { return bound_.empty() ? (*params_)[id].value : bound_.at(id); }

  const std::vector<Tensor<T>>& bound() const { return bound_; }
  const ParamSet<T>& params() const { return *params_; }

  bool train = false;
  Rng rng;
  DropoutPosition dropout_position = DropoutPosition::post_softmax;

 private:
  const ParamSet<T>* params_;
  std::vector<Tensor<T>> bound_;
};

}  // namespace gsifn
