// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gsifn/encoding.hpp"
#include "gsifn/gsit.hpp"
#include "gsifn/mlstm.hpp"
#include "gsifn/mult.hpp"
#include "gsifn/ulgm.hpp"

namespace gsifn {

enum class FusionKind { gsifn, mult };
std::string to_string(FusionKind k);
FusionKind parse_fusion(const std::string& s);

struct ModelConfig {
  FusionKind kind = FusionKind::gsifn;
  StructureId structure = StructureId::original;
  /// Shared by the fusion transformers (GsiT or the cross-modal baseline).
  nn::TransformerConfig fusion;
  /// Width of every unimodal / fused representation h_u.
  std::size_t hidden = 64;

  /// Raw feature dims. In token mode text_dim is the embedding width.
  std::size_t text_dim = 32;
  std::size_t vision_dim = 16;
  std::size_t audio_dim = 16;
  /// > 0 selects the toy text encoder over token ids.
  std::size_t vocab = 0;

  std::size_t text_kernel = 1;
  std::size_t vision_kernel = 3;
  std::size_t audio_kernel = 3;

  /// mLSTM enhancement of vision/audio; num_blocks 0 disables it.
  MlstmConfig mlstm;
  /// Modalities fed to fusion (ablation); unimodal heads always use all three.
  ModalitySet fusion_modalities = kAllModalities;

  void validate() const;
  std::size_t fusion_width() const;
};

/// One sample after padding. Sequences are zero padded to the batch maximum;
/// `valid` holds the true lengths.
struct ModelInput {
  std::string id;
  Tensor<float> text;                // T_t x text_dim (feature mode)
  std::vector<std::size_t> tokens;   // token mode
  Tensor<float> vision;
  Tensor<float> audio;
  SegLengths valid;
  /// Padded lengths (rows fed to the model).
  SegLengths padded;
};

/// Builds padded inputs for a batch of samples.
std::vector<ModelInput> make_batch(const std::vector<const Sample*>& samples);

template <class T>
struct ModelOutput {
  std::array<Tensor<T>, 4> pred;    // m, t, v, a; each 1 x 1
  std::array<Tensor<T>, 4> hidden;  // m, t, v, a; each 1 x hidden
};

struct Model {
  ModelConfig cfg;
  std::optional<ToyTextEncoder> text_encoder;
  Conv1dProjection proj_t, proj_v, proj_a;
  MlstmStack enh_v, enh_a;
  std::optional<Gsit> gsit;
  std::optional<Mult> mult;
  std::array<nn::Linear, 4> hidden_proj;  // m (from the fused vector), t, v, a
  std::array<nn::Linear, 4> head;

  template <class T>
  static Model create(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng);

  template <class T>
  ModelOutput<T> forward(Context<T>& ctx, const ModelInput& in,
                         std::vector<nn::AttentionRecord>* records = nullptr) const;

  /// Projected (X_t, X_v, X_a) before fusion.
  template <class T>
  std::array<Tensor<T>, 3> encode(const Context<T>& ctx, const ModelInput& in) const;
};

}  // namespace gsifn
