// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "gsifn/masking.hpp"
#include "gsifn/nn/layers.hpp"

namespace gsifn {

using CrossModalConfig = nn::TransformerConfig;

/// Queries from `target`, keys/values from `source`; output has target's length.
template <class T>
Tensor<T> crossmodal_transformer(Context<T>& ctx, const nn::Transformer& tr, const Tensor<T>& target,
                                 const Tensor<T>& source, std::vector<nn::AttentionRecord>* records = nullptr);

/// Cross-modal baseline: per target modality two cross-modal transformers (one
/// per source), their outputs joined on features and passed through a
/// self-attention transformer of width 2d.
struct Mult {
  CrossModalConfig cfg;
  /// cross[2*u + k]: target u, k-th other modality in (t, v, a) order.
  std::array<nn::Transformer, 6> cross;
  std::array<nn::Transformer, 3> self;

  static constexpr std::size_t kStacks = 9;

  template <class T>
  static Mult create(ParamSet<T>& ps, const std::string& name, const CrossModalConfig& cfg, Rng& rng);

  /// Returns 1 x 6d: the final valid hidden state of each branch.
  template <class T>
  Tensor<T> forward(Context<T>& ctx, const std::array<Tensor<T>, 3>& x, const SegLengths& valid,
                    std::vector<nn::AttentionRecord>* records = nullptr) const;
};

}  // namespace gsifn
