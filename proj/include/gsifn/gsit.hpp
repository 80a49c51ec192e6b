// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "gsifn/masking.hpp"
#include "gsifn/nn/layers.hpp"

namespace gsifn {

/// Multimodal graph embedding: the three modality sequences stacked row-wise
/// in (text, vision, audio) order.
template <class T>
struct Mge {
  Tensor<T> values;
  SegLengths seg;

  std::array<Tensor<T>, 3> split() const;
};

template <class T>
Mge<T> concat_mge(const Tensor<T>& xt, const Tensor<T>& xv, const Tensor<T>& xa);

/// Self-attention over the MGE under `mask`. Thin checked wrapper around the
/// attention layer; returns the projected output (pre-residual).
template <class T>
typename nn::MultiHeadAttention::Output<T> masked_mha(Context<T>& ctx, const nn::MultiHeadAttention& mha,
                                                      const Mge<T>& v, const BlockMask& mask, double dropout);

using GsitConfig = nn::TransformerConfig;

/// Which modalities take part in fusion. A single modality runs plain
/// self-attention; two modalities see each other in both rings.
using ModalitySet = std::array<bool, 3>;
inline constexpr ModalitySet kAllModalities{true, true, true};

/// Additive mask for the fusion stage of a (possibly reduced) modality set,
/// over the present segments only. Returns an undefined tensor when no
/// masking applies (single modality).
template <class T>
Tensor<T> fusion_mask(const std::vector<std::size_t>& lengths, const ModalitySet& present, StructureId structure,
                      RingDirection dir);
template <class T>
Tensor<T> enhancement_mask(const std::vector<std::size_t>& lengths, const ModalitySet& present);

/// Forward-ring and backward-ring fusion transformers (width d), feature
/// concatenation, then the intra-enhancement transformer (width 2d).
struct Gsit {
  GsitConfig cfg;
  nn::Transformer forward_ring;
  nn::Transformer backward_ring;
  nn::Transformer enhance;

  template <class T>
  static Gsit create(ParamSet<T>& ps, const std::string& name, const GsitConfig& cfg, Rng& rng);

  /// Number of transformer stacks instantiated.
  static constexpr std::size_t kStacks = 3;

  /// Inputs are T_u x d (possibly zero padded); `valid` carries the true
  /// lengths used to pick each segment's final hidden state. Absent
  /// modalities (present[u] == false) are ignored. Returns 1 x (2d * #present).
  template <class T>
  Tensor<T> forward(Context<T>& ctx, const std::array<Tensor<T>, 3>& x, const SegLengths& valid,
                    StructureId structure, const ModalitySet& present = kAllModalities,
                    std::vector<nn::AttentionRecord>* records = nullptr) const;

  /// The enhanced MGE before decomposition (rows = concatenated sequence).
  template <class T>
  Tensor<T> enhanced_sequence(Context<T>& ctx, const std::array<Tensor<T>, 3>& x, StructureId structure,
                              const ModalitySet& present = kAllModalities,
                              std::vector<nn::AttentionRecord>* records = nullptr) const;
};

/// One MFT file per record plus index.json carrying the segment boundaries.
void export_attention(const std::vector<nn::AttentionRecord>& records, const SegLengths& seg,
                      const std::filesystem::path& dir);

}  // namespace gsifn
