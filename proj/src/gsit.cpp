// SPDX-License-Identifier: Apache-2.0
#include "gsifn/gsit.hpp"

#include <fstream>

#include <json.hpp>

#include "gsifn/encoding.hpp"

namespace gsifn {

template <class T>
std::array<Tensor<T>, 3> Mge<T>::split() const {
  auto parts = ops::split(values, 0, {seg.text, seg.vision, seg.audio});
  return {parts[0], parts[1], parts[2]};
}

template <class T>
Mge<T> concat_mge(const Tensor<T>& xt, const Tensor<T>& xv, const Tensor<T>& xa) {
  if (xt.cols() != xv.cols() || xt.cols() != xa.cols()) {
    throw ShapeError("concat_mge: feature dims " + shape_str(xt.shape()) + ", " + shape_str(xv.shape()) + ", " +
                     shape_str(xa.shape()) + " differ");
  }
  Mge<T> m{ops::concat<T>({xt, xv, xa}, 0), {xt.rows(), xv.rows(), xa.rows()}};
  return m;
}

template <class T>
typename nn::MultiHeadAttention::Output<T> masked_mha(Context<T>& ctx, const nn::MultiHeadAttention& mha,
                                                      const Mge<T>& v, const BlockMask& mask, double dropout) {
  if (mask.seg() != v.seg) throw ShapeError("masked_mha: mask segments do not match the MGE");
  const auto m = mask.tensor<T>();
  return mha.forward(ctx, v.values, v.values, &m, dropout);
}

namespace {

std::vector<std::size_t> present_indices(const ModalitySet& present) {
  std::vector<std::size_t> idx;
  for (std::size_t u = 0; u < 3; ++u)
    if (present[u]) idx.push_back(u);
  if (idx.empty()) throw ConfigError("fusion needs at least one modality");
  return idx;
}

template <class T>
Tensor<T> dense_from_pattern(const std::vector<std::size_t>& lengths, const std::vector<std::size_t>& idx,
                             const BlockPattern& p) {
  std::size_t n = 0;
  for (auto l : lengths) n += l;
  std::vector<T> v(n * n, static_cast<T>(ops::kMaskedLogit));
  std::size_t r0 = 0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    std::size_t c0 = 0;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (p[idx[a]][idx[b]]) {
        for (std::size_t r = r0; r < r0 + lengths[a]; ++r)
          for (std::size_t c = c0; c < c0 + lengths[b]; ++c) v[r * n + c] = T(0);
      }
      c0 += lengths[b];
    }
    r0 += lengths[a];
  }
  return Tensor<T>({n, n}, std::move(v));
}

}  // namespace

template <class T>
Tensor<T> fusion_mask(const std::vector<std::size_t>& lengths, const ModalitySet& present, StructureId structure,
                      RingDirection dir) {
  const auto idx = present_indices(present);
  if (lengths.size() != idx.size()) throw ShapeError("fusion_mask: one length per present modality expected");
  if (idx.size() == 1) return {};
  if (idx.size() == 2) return dense_from_pattern<T>(lengths, idx, all_inter_pattern());
  return gen_structure_mask({lengths[0], lengths[1], lengths[2]}, structure, dir).template tensor<T>();
}

template <class T>
Tensor<T> enhancement_mask(const std::vector<std::size_t>& lengths, const ModalitySet& present) {
  const auto idx = present_indices(present);
  if (lengths.size() != idx.size()) throw ShapeError("enhancement_mask: one length per present modality expected");
  if (idx.size() == 1) return {};
  return dense_from_pattern<T>(lengths, idx, interlaced_pattern(MaskMode::intra, RingDirection::forward));
}

template <class T>
Gsit Gsit::create(ParamSet<T>& ps, const std::string& name, const GsitConfig& cfg, Rng& rng) {
  cfg.validate();
  Gsit g;
  g.cfg = cfg;
  g.forward_ring = nn::Transformer::create(ps, name + ".forward", ParamGroup::other, cfg, rng);
  g.backward_ring = nn::Transformer::create(ps, name + ".backward", ParamGroup::other, cfg, rng);
  auto wide = cfg;
  wide.d_model = 2 * cfg.d_model;
  wide.head_dim = cfg.head_dim ? 2 * cfg.head_dim : 0;
  g.enhance = nn::Transformer::create(ps, name + ".enhance", ParamGroup::other, wide, rng);
  return g;
}

template <class T>
Tensor<T> Gsit::enhanced_sequence(Context<T>& ctx, const std::array<Tensor<T>, 3>& x, StructureId structure,
                                  const ModalitySet& present, std::vector<nn::AttentionRecord>* records) const {
  const auto idx = present_indices(present);
  std::vector<Tensor<T>> parts;
  std::vector<std::size_t> lengths;
  for (auto u : idx) {
    if (x[u].cols() != cfg.d_model) {
      throw ShapeError("gsit: modality " + std::string(1, modality_tag(static_cast<Modality>(u))) + " has width " +
                       std::to_string(x[u].cols()) + ", expected " + std::to_string(cfg.d_model));
    }
    parts.push_back(x[u]);
    lengths.push_back(x[u].rows());
  }
  const auto v = parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
  const auto m_fwd = fusion_mask<T>(lengths, present, structure, RingDirection::forward);
  const auto m_bwd = fusion_mask<T>(lengths, present, structure, RingDirection::backward);
  const auto m_enh = enhancement_mask<T>(lengths, present);
  auto opt = [](const Tensor<T>& m) { return m.defined() ? &m : nullptr; };

  const auto v_fwd = forward_ring.template forward<T>(ctx, v, opt(m_fwd), nullptr, records);
  const auto v_bwd = backward_ring.template forward<T>(ctx, v, opt(m_bwd), nullptr, records);
  const auto v_bi = ops::concat<T>({v_fwd, v_bwd}, 1);
  return enhance.template forward<T>(ctx, v_bi, opt(m_enh), nullptr, records);
}

template <class T>
Tensor<T> Gsit::forward(Context<T>& ctx, const std::array<Tensor<T>, 3>& x, const SegLengths& valid,
                        StructureId structure, const ModalitySet& present,
                        std::vector<nn::AttentionRecord>* records) const {
  const auto vm = enhanced_sequence(ctx, x, structure, present, records);
  std::vector<Tensor<T>> finals;
  std::size_t offset = 0;
  for (auto u : present_indices(present)) {
    const auto m = static_cast<Modality>(u);
    if (valid[m] == 0 || valid[m] > x[u].rows()) {
      throw ShapeError("gsit: valid length of " + std::string(1, modality_tag(m)) + " outside its sequence");
    }
    finals.push_back(ops::slice(vm, 0, offset + valid[m] - 1, 1));
    offset += x[u].rows();
  }
  return finals.size() == 1 ? finals.front() : ops::concat(finals, 1);
}

void export_attention(const std::vector<nn::AttentionRecord>& records, const SegLengths& seg,
                      const std::filesystem::path& dir) {
  if (records.empty()) throw Error("attention.empty", "no attention records to export");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io", "cannot create " + dir.string() + ": " + ec.message());
  nlohmann::ordered_json index;
  index["seg"] = {{"t", seg.text}, {"v", seg.vision}, {"a", seg.audio}};
  index["boundaries"] = {0, seg.text, seg.text + seg.vision, seg.total()};
  auto& maps = index["maps"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    const std::string file = r.transformer + ".l" + std::to_string(r.layer) + ".h" + std::to_string(r.head) + ".mft";
    write_mft(dir / file, r.weights);
    nlohmann::ordered_json m{{"file", file}, {"transformer", r.transformer}, {"layer", r.layer}, {"head", r.head}};
    if (r.mask.defined() && r.weights.rows() == seg.total()) {
      m["pattern"] = pattern_str(block_pattern(seg, r.mask.to_vector()));
    }
    maps.push_back(std::move(m));
  }
  std::ofstream f(dir / "index.json");
  if (!f) throw Error("io", "cannot write " + (dir / "index.json").string());
  f << index.dump(2) << '\n';
}

#define GSIFN_INSTANTIATE_GSIT(T)                                                                                \
  template struct Mge<T>;                                                                                        \
  template Mge<T> concat_mge(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template nn::MultiHeadAttention::Output<T> masked_mha(Context<T>&, const nn::MultiHeadAttention&,             \
                                                        const Mge<T>&, const BlockMask&, double);                \
  template Tensor<T> fusion_mask<T>(const std::vector<std::size_t>&, const ModalitySet&, StructureId,           \
                                    RingDirection);                                                              \
  template Tensor<T> enhancement_mask<T>(const std::vector<std::size_t>&, const ModalitySet&);                   \
  template Gsit Gsit::create<T>(ParamSet<T>&, const std::string&, const GsitConfig&, Rng&);                      \
  template Tensor<T> Gsit::forward<T>(Context<T>&, const std::array<Tensor<T>, 3>&, const SegLengths&,           \
                                      StructureId, const ModalitySet&, std::vector<nn::AttentionRecord>*) const; \
  template Tensor<T> Gsit::enhanced_sequence<T>(Context<T>&, const std::array<Tensor<T>, 3>&, StructureId,       \
                                                const ModalitySet&, std::vector<nn::AttentionRecord>*) const;

GSIFN_INSTANTIATE_GSIT(float)
GSIFN_INSTANTIATE_GSIT(double)

}  // namespace gsifn
