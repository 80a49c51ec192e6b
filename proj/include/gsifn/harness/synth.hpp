// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

namespace gsifn {

struct SynthSpec {
  std::size_t samples = 500;
  /// Inclusive [min, max] sequence length per modality (t, v, a).
  std::array<std::size_t, 3> min_len{18, 27, 27};
  std::array<std::size_t, 3> max_len{22, 33, 33};
  std::array<std::size_t, 3> dims{32, 16, 16};
  /// Signal-to-noise power ratio per modality; infinity means noiseless.
  std::array<double, 3> snr{4.0, 1.0, 1.0};
  double label_min = -3.0;
  double label_max = 3.0;
  /// > 0 writes text as token ids over this vocabulary instead of features.
  std::size_t vocab = 0;

  void validate() const;
  static SynthSpec parse(const std::string& json_text);
  std::string to_json() const;
};

/// Per sample: y ~ U[label_min, label_max]; modality u's frame t is
/// (y / label_max) * envelope_u(t) * direction_u plus N(0, sigma_u^2) noise,
/// with sigma_u set from the SNR. Text row 0 acts as CLS and carries the
/// unmodulated signal. Writes manifest.jsonl and features/ into out_dir.
std::filesystem::path synth_dataset(const SynthSpec& spec, std::uint64_t seed, const std::filesystem::path& out_dir);

/// Split bucket of a sample id: 70/15/15 by FNV-1a hash.
enum class Split { train, val, test };
Split split_of(const std::string& id);
std::uint64_t fnv1a(const std::string& s);

}  // namespace gsifn
