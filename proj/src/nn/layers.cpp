// SPDX-License-Identifier: Apache-2.0
#include "gsifn/nn/layers.hpp"

#include <cmath>

namespace gsifn {

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::text: return "text";
    case ParamGroup::vision: return "vision";
    case ParamGroup::audio: return "audio";
    case ParamGroup::other: return "other";
  }
  return "?";
}

}  // namespace gsifn

namespace gsifn::nn {

template <class T>
Linear Linear::create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t in, std::size_t out,
                      Rng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = ps.add_glorot(name + ".w", g, {in, out}, rng);
  l.b = ps.add_constant(name + ".b", g, {1, out}, T(0));
  return l;
}

template <class T>
Tensor<T> Linear::operator()(const Context<T>& ctx, const Tensor<T>& x) const {
  return ops::add_row(ops::matmul(x, ctx[w]), ctx[b]);
}

template <class T>
LayerNorm LayerNorm::create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t dim) {
  LayerNorm ln;
  ln.gamma = ps.add_constant(name + ".gamma", g, {1, dim}, T(1));
  ln.beta = ps.add_constant(name + ".beta", g, {1, dim}, T(0));
  return ln;
}

template <class T>
Tensor<T> LayerNorm::operator()(const Context<T>& ctx, const Tensor<T>& x) const {
  return ops::layer_norm(x, ctx[gamma], ctx[beta]);
}

template <class T>
MultiHeadAttention MultiHeadAttention::create(ParamSet<T>& ps, const std::string& name, ParamGroup g,
                                              std::size_t d_model, std::size_t heads, std::size_t head_dim,
                                              Rng& rng) {
  if (heads == 0 || head_dim == 0) throw ConfigError("attention needs heads >= 1 and head_dim >= 1");
  MultiHeadAttention m;
  m.heads = heads;
  m.head_dim = head_dim;
  const std::size_t inner = heads * head_dim;
  m.q = Linear::create(ps, name + ".q", g, d_model, inner, rng);
  m.k = Linear::create(ps, name + ".k", g, d_model, inner, rng);
  m.v = Linear::create(ps, name + ".v", g, d_model, inner, rng);
  m.o = Linear::create(ps, name + ".o", g, inner, d_model, rng);
  return m;
}

template <class T>
MultiHeadAttention::Output<T> MultiHeadAttention::forward(Context<T>& ctx, const Tensor<T>& target,
                                                          const Tensor<T>& source, const Tensor<T>* mask,
                                                          double dropout) const {
  if (target.cols() != source.cols()) {
    throw ShapeError("attention: target width " + std::to_string(target.cols()) + " vs source width " +
                     std::to_string(source.cols()));
  }
  if (mask && (mask->rows() != target.rows() || mask->cols() != source.rows())) {
    throw ShapeError("attention: mask " + shape_str(mask->shape()) + " does not fit " +
                     std::to_string(target.rows()) + " queries x " + std::to_string(source.rows()) + " keys");
  }
  const Tensor<T> Q = q(ctx, target);
  const Tensor<T> K = k(ctx, source);
  const Tensor<T> V = v(ctx, source);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));

  Output<T> out;
  std::vector<Tensor<T>> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = ops::slice(Q, 1, h * head_dim, head_dim);
    const auto kh = ops::slice(K, 1, h * head_dim, head_dim);
    const auto vh = ops::slice(V, 1, h * head_dim, head_dim);
    const auto scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    Tensor<T> g;
    Tensor<T> mixed;
    if (ctx.dropout_position == DropoutPosition::pre_softmax && ctx.train && dropout > 0.0) {
      // Literal S(D(.)) order: dropout on the scores, then masked softmax.
      // Masked positions stay masked because the mask is applied afterwards.
      g = ops::softmax(ops::dropout(scores, dropout, ctx.train, ctx.rng), mask);
      mixed = g;
    } else {
      g = ops::softmax(scores, mask);
      mixed = ops::dropout(g, dropout, ctx.train, ctx.rng);
    }
    per_head.push_back(ops::matmul(mixed, vh));
    out.weights.push_back(g);
  }
  out.value = o(ctx, heads == 1 ? per_head.front() : ops::concat(per_head, 1));
  return out;
}

void TransformerConfig::validate() const {
  if (d_model == 0 || heads == 0) throw ConfigError("transformer needs d_model >= 1 and heads >= 1");
  if (head_dim == 0 && d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " + std::to_string(heads));
  }
  if (layers == 0) throw ConfigError("transformer needs at least one layer");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

template <class T>
TransformerLayer TransformerLayer::create(ParamSet<T>& ps, const std::string& name, ParamGroup g,
                                          const TransformerConfig& cfg, Rng& rng) {
  TransformerLayer l;
  l.ln_attn = LayerNorm::create(ps, name + ".ln_attn", g, cfg.d_model);
  l.attn = MultiHeadAttention::create(ps, name + ".attn", g, cfg.d_model, cfg.heads, cfg.resolved_head_dim(), rng);
  l.has_ffn = cfg.ffn_mult > 0;
  if (l.has_ffn) {
    l.ln_ffn = LayerNorm::create(ps, name + ".ln_ffn", g, cfg.d_model);
    l.ffn_in = Linear::create(ps, name + ".ffn_in", g, cfg.d_model, cfg.ffn_mult * cfg.d_model, rng);
    l.ffn_out = Linear::create(ps, name + ".ffn_out", g, cfg.ffn_mult * cfg.d_model, cfg.d_model, rng);
  }
  return l;
}

template <class T>
Transformer Transformer::create(ParamSet<T>& ps, const std::string& name, ParamGroup g, const TransformerConfig& cfg,
                                Rng& rng) {
  cfg.validate();
  Transformer t;
  t.name = name;
  t.cfg = cfg;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    t.layers.push_back(TransformerLayer::create(ps, name + ".l" + std::to_string(i), g, cfg, rng));
  }
  return t;
}

template <class T>
Tensor<T> Transformer::forward(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>* mask, const Tensor<T>* source,
                               std::vector<AttentionRecord>* records) const {
  Tensor<T> h = x;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& layer = layers[li];
    const auto hn = layer.ln_attn(ctx, h);
    const auto sn = source ? layer.ln_attn(ctx, *source) : hn;
    auto att = layer.attn.forward(ctx, hn, sn, mask, cfg.dropout);
    h = ops::add(h, ops::dropout(att.value, cfg.dropout, ctx.train, ctx.rng));
    if (records) {
      for (std::size_t head = 0; head < att.weights.size(); ++head) {
        records->push_back({name, li, head, att.weights[head].detach().template cast<float>(),
                            mask ? mask->template cast<float>() : Tensor<float>()});
      }
    }
    if (layer.has_ffn) {
      auto f = ops::relu(layer.ffn_in(ctx, layer.ln_ffn(ctx, h)));
      f = layer.ffn_out(ctx, ops::dropout(f, cfg.dropout, ctx.train, ctx.rng));
      h = ops::add(h, ops::dropout(f, cfg.dropout, ctx.train, ctx.rng));
    }
  }
  return h;
}

#define GSIFN_INSTANTIATE_LAYERS(T)                                                                            \
  template Linear Linear::create<T>(ParamSet<T>&, const std::string&, ParamGroup, std::size_t, std::size_t,   \
                                    Rng&);                                                                     \
  template Tensor<T> Linear::operator()<T>(const Context<T>&, const Tensor<T>&) const;                         \
  template LayerNorm LayerNorm::create<T>(ParamSet<T>&, const std::string&, ParamGroup, std::size_t);          \
  template Tensor<T> LayerNorm::operator()<T>(const Context<T>&, const Tensor<T>&) const;                      \
  template MultiHeadAttention MultiHeadAttention::create<T>(ParamSet<T>&, const std::string&, ParamGroup,      \
                                                            std::size_t, std::size_t, std::size_t, Rng&);      \
  template MultiHeadAttention::Output<T> MultiHeadAttention::forward<T>(Context<T>&, const Tensor<T>&,         \
                                                                        const Tensor<T>&, const Tensor<T>*,    \
                                                                        double) const;                         \
  template TransformerLayer TransformerLayer::create<T>(ParamSet<T>&, const std::string&, ParamGroup,          \
                                                        const TransformerConfig&, Rng&);                       \
  template Transformer Transformer::create<T>(ParamSet<T>&, const std::string&, ParamGroup,                    \
                                              const TransformerConfig&, Rng&);                                 \
  template Tensor<T> Transformer::forward<T>(Context<T>&, const Tensor<T>&, const Tensor<T>*, const Tensor<T>*, \
                                             std::vector<AttentionRecord>*) const;

GSIFN_INSTANTIATE_LAYERS(float)
GSIFN_INSTANTIATE_LAYERS(double)

}  // namespace gsifn::nn
