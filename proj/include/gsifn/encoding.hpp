// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gsifn/masking.hpp"
#include "gsifn/nn/layers.hpp"

namespace gsifn {

/// Same-padded temporal convolution d_in -> d_model.
struct Conv1dProjection {
  ParamId w = 0;
  ParamId b = 0;
  std::size_t kernel = 1;

  template <class T>
  static Conv1dProjection create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t d_in,
                                 std::size_t d_model, std::size_t kernel, Rng& rng);

  template <class T>
  Tensor<T> operator()(const Context<T>& ctx, const Tensor<T>& s) const {
    return ops::conv1d(s, ctx[w], ctx[b]);
  }
};

/// PE[pos][2i] = sin(pos / 10000^(2i/d)), PE[pos][2i+1] = cos(same angle).
template <class T>
Tensor<T> sinusoidal_encoding(std::size_t len, std::size_t d);

inline constexpr std::size_t kClsToken = 1;
inline constexpr std::size_t kSepToken = 2;

/// Learned embedding table plus fixed sinusoidal positions. The CLS row
/// (position 0) additionally receives the mean of the body token
/// embeddings, so it summarises the sentence without a contextual encoder.
struct ToyTextEncoder {
  ParamId table = 0;
  std::size_t vocab = 0;
  std::size_t dim = 0;

  template <class T>
  static ToyTextEncoder create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t vocab,
                               std::size_t dim, Rng& rng);

  /// ids must start with kClsToken and end with kSepToken. The CLS index is 0.
  template <class T>
  Tensor<T> operator()(const Context<T>& ctx, const std::vector<std::size_t>& ids) const;
};

// ---------------------------------------------------------------------------
// MFT: "MFT1" | u32 ndim | ndim x u32 dims | float32 payload, all little-endian.

void write_mft(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_mft(const std::filesystem::path& path);
std::vector<unsigned char> encode_mft(const Tensor<float>& t);
Tensor<float> decode_mft(const std::vector<unsigned char>& bytes);

/// One manifest line. Text is either an MFT feature path or token ids.
struct ManifestEntry {
  std::string id;
  float label = 0.0f;
  std::optional<std::string> text_path;
  std::vector<std::size_t> text_tokens;
  std::string vision_path;
  std::string audio_path;
  SegLengths lengths;
};

struct Sample {
  std::string id;
  float label = 0.0f;
  /// Text features (T_t x d) when ingesting precomputed features; empty in token mode.
  Tensor<float> text;
  std::vector<std::size_t> tokens;
  Tensor<float> vision;
  Tensor<float> audio;
  /// True (unpadded) lengths.
  SegLengths lengths;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Loads all three modalities of an entry, relative paths resolved against
/// `base`. The manifest lengths must not exceed the stored rows.
Sample load_sample(const ManifestEntry& e, const std::filesystem::path& base);
std::vector<Sample> load_dataset(const std::filesystem::path& manifest);

/// Left-aligned zero padding to `len` rows.
Tensor<float> pad_rows(const Tensor<float>& x, std::size_t len);

}  // namespace gsifn
