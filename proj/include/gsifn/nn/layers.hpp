// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gsifn/core/ops.hpp"
#include "gsifn/nn/params.hpp"

namespace gsifn::nn {

/// y = x W + b, W: in x out, b: 1 x out.
struct Linear {
  ParamId w = 0;
  ParamId b = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  template <class T>
  static Linear create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t in, std::size_t out,
                       Rng& rng);

  template <class T>
  Tensor<T> operator()(const Context<T>& ctx, const Tensor<T>& x) const;
};

struct LayerNorm {
  ParamId gamma = 0;
  ParamId beta = 0;

  template <class T>
  static LayerNorm create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t dim);

  template <class T>
  Tensor<T> operator()(const Context<T>& ctx, const Tensor<T>& x) const;
};

/// Multi-head scaled dot-product attention with an optional additive mask.
/// Queries come from `target`, keys and values from `source`.
struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;
  std::size_t head_dim = 0;

  template <class T>
  static MultiHeadAttention create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t d_model,
                                   std::size_t heads, std::size_t head_dim, Rng& rng);

  template <class T>
  struct Output {
    Tensor<T> value;
    /// Post-softmax weights per head, before dropout.
    std::vector<Tensor<T>> weights;
  };

  template <class T>
  Output<T> forward(Context<T>& ctx, const Tensor<T>& target, const Tensor<T>& source, const Tensor<T>* mask,
                    double dropout) const;
};

struct TransformerConfig {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  /// Per-head query/key/value width; 0 means d_model / heads.
  std::size_t head_dim = 0;
  std::size_t layers = 1;
  /// FFN hidden width multiplier; 0 removes the feed-forward sublayer.
  std::size_t ffn_mult = 4;
  double dropout = 0.2;

  std::size_t resolved_head_dim() const { return head_dim ? head_dim : d_model / heads; }
  void validate() const;
};

/// Pre-norm layer: x + MHA(LN(x), LN(src)) then x + FFN(LN(x)).
struct TransformerLayer {
  LayerNorm ln_attn;
  MultiHeadAttention attn;
  LayerNorm ln_ffn;
  bool has_ffn = false;
  Linear ffn_in, ffn_out;

  template <class T>
  static TransformerLayer create(ParamSet<T>& ps, const std::string& name, ParamGroup g,
                                 const TransformerConfig& cfg, Rng& rng);
};

/// One attention map as captured during a forward pass.
struct AttentionRecord {
  std::string transformer;
  std::size_t layer = 0;
  std::size_t head = 0;
  Tensor<float> weights;
  /// Additive mask the map was computed under (undefined when unmasked).
  Tensor<float> mask;
};

/// A stack of pre-norm layers. With `source` set, attention is cross-modal:
/// queries from the running target stream, keys/values from the fixed source
/// (normalised by the same layer norm).
struct Transformer {
  std::string name;
  TransformerConfig cfg;
  std::vector<TransformerLayer> layers;

  template <class T>
  static Transformer create(ParamSet<T>& ps, const std::string& name, ParamGroup g, const TransformerConfig& cfg,
                            Rng& rng);

  template <class T>
  Tensor<T> forward(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>* mask,
                    const Tensor<T>* source = nullptr, std::vector<AttentionRecord>* records = nullptr) const;
};

}  // namespace gsifn::nn
