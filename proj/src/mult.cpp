// SPDX-License-Identifier: Apache-2.0
#include "gsifn/mult.hpp"

namespace gsifn {

template <class T>
Tensor<T> crossmodal_transformer(Context<T>& ctx, const nn::Transformer& tr, const Tensor<T>& target,
                                 const Tensor<T>& source, std::vector<nn::AttentionRecord>* records) {
  if (target.cols() != source.cols()) {
    throw ShapeError("crossmodal_transformer: target " + shape_str(target.shape()) + " vs source " +
                     shape_str(source.shape()));
  }
  return tr.template forward<T>(ctx, target, nullptr, &source, records);
}

template <class T>
Mult Mult::create(ParamSet<T>& ps, const std::string& name, const CrossModalConfig& cfg, Rng& rng) {
  cfg.validate();
  Mult m;
  m.cfg = cfg;
  auto wide = cfg;
  wide.d_model = 2 * cfg.d_model;
  wide.head_dim = cfg.head_dim ? 2 * cfg.head_dim : 0;
  for (std::size_t u = 0; u < 3; ++u) {
    const char tu = modality_tag(static_cast<Modality>(u));
    std::size_t k = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == u) continue;
      const char tj = modality_tag(static_cast<Modality>(j));
      m.cross[2 * u + k++] =
          nn::Transformer::create(ps, name + ".cross_" + tj + "_to_" + tu, ParamGroup::other, cfg, rng);
    }
  }
  for (std::size_t u = 0; u < 3; ++u) {
    m.self[u] = nn::Transformer::create(ps, name + ".self_" + std::string(1, modality_tag(static_cast<Modality>(u))),
                                        ParamGroup::other, wide, rng);
  }
  return m;
}

template <class T>
Tensor<T> Mult::forward(Context<T>& ctx, const std::array<Tensor<T>, 3>& x, const SegLengths& valid,
                        std::vector<nn::AttentionRecord>* records) const {
  std::vector<Tensor<T>> finals;
  for (std::size_t u = 0; u < 3; ++u) {
    std::vector<Tensor<T>> branch;
    std::size_t k = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == u) continue;
      branch.push_back(crossmodal_transformer(ctx, cross[2 * u + k++], x[u], x[j], records));
    }
    const auto joined = ops::concat(branch, 1);
    const auto h = self[u].template forward<T>(ctx, joined, nullptr, nullptr, records);
    const auto len = valid[static_cast<Modality>(u)];
    if (len == 0 || len > h.rows()) throw ShapeError("mult: valid length outside its sequence");
    finals.push_back(ops::slice(h, 0, len - 1, 1));
  }
  return ops::concat(finals, 1);
}

#define GSIFN_INSTANTIATE_MULT(T)                                                                              \
  template Tensor<T> crossmodal_transformer(Context<T>&, const nn::Transformer&, const Tensor<T>&,             \
                                            const Tensor<T>&, std::vector<nn::AttentionRecord>*);              \
  template Mult Mult::create<T>(ParamSet<T>&, const std::string&, const CrossModalConfig&, Rng&);              \
  template Tensor<T> Mult::forward<T>(Context<T>&, const std::array<Tensor<T>, 3>&, const SegLengths&,         \
                                      std::vector<nn::AttentionRecord>*) const;

GSIFN_INSTANTIATE_MULT(float)
GSIFN_INSTANTIATE_MULT(double)

}  // namespace gsifn
