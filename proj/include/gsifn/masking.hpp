// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gsifn/core/ops.hpp"
#include "gsifn/core/tensor.hpp"

namespace gsifn {

/// Segment order inside every concatenated trimodal sequence.
enum class Modality : std::size_t { text = 0, vision = 1, audio = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::text, Modality::vision, Modality::audio};

char modality_tag(Modality m);

/// Per-modality token counts of a concatenated (text, vision, audio) sequence.
struct SegLengths {
  std::size_t text = 0;
  std::size_t vision = 0;
  std::size_t audio = 0;

  std::size_t total() const { return text + vision + audio; }
  std::array<std::size_t, 3> as_array() const { return {text, vision, audio}; }
  std::size_t operator[](Modality m) const { return as_array()[static_cast<std::size_t>(m)]; }
  /// First row of modality m in the concatenated sequence.
  std::size_t offset(Modality m) const;
  /// Throws when any length is zero.
  void validate() const;

  friend bool operator==(const SegLengths&, const SegLengths&) = default;
};

enum class MaskMode { inter, intra };
enum class RingDirection { forward, backward };
enum class StructureId { original, structure1, structure2, structure3, self_only };

inline constexpr std::array<StructureId, 5> kAllStructures{StructureId::original, StructureId::structure1,
                                                           StructureId::structure2, StructureId::structure3,
                                                           StructureId::self_only};

std::string to_string(StructureId s);
std::string to_string(RingDirection d);
StructureId parse_structure(std::string_view name);

/// pattern[i][j] is true when block (i, j) is visible, i.e. modality i
/// aggregates from modality j.
using BlockPattern = std::array<std::array<bool, 3>, 3>;

/// Additive attention mask over a concatenated trimodal sequence: every entry
/// is 0 (visible) or ops::kMaskedLogit, uniform inside each of the 3x3 blocks.
class BlockMask {
 public:
  /// Materialises `pattern` over `seg`.
  BlockMask(SegLengths seg, const BlockPattern& pattern);

  /// Wraps a dense additive matrix; the block pattern is probed and a block
  /// with mixed entries is rejected ("non-uniform block").
  static BlockMask from_dense(SegLengths seg, std::vector<float> dense);

  const SegLengths& seg() const { return seg_; }
  const BlockPattern& pattern() const { return pattern_; }
  std::size_t size() const { return seg_.total(); }
  const std::vector<float>& dense() const { return dense_; }
  bool visible(std::size_t row, std::size_t col) const { return !ops::is_masked(dense_[row * size() + col]); }

  template <class T>
  Tensor<T> tensor() const {
    std::vector<T> v(dense_.begin(), dense_.end());
    return Tensor<T>({size(), size()}, std::move(v));
  }

 private:
  BlockMask() = default;

  SegLengths seg_;
  BlockPattern pattern_{};
  std::vector<float> dense_;
};

/// Interlaced mask built by the row-by-row ones/zeros procedure: zeros mark
/// hidden positions, intra mode flips the encoding with |M - 1|, and the
/// final pass maps ones to 0 and zeros to the masked logit.
/// mode == intra ignores `dir`.
BlockMask gen_interlaced_mask(SegLengths seg, MaskMode mode, RingDirection dir);

/// Direct block-level transcriptions. inter: the two ring masks; intra: the
/// complement of the all-off-diagonal inter mask (diagonal blocks only).
BlockPattern interlaced_pattern(MaskMode mode, RingDirection dir);
/// Every off-diagonal block visible, diagonal hidden.
BlockPattern all_inter_pattern();

/// Ring mask for one of the graph-structure variants; self_only ignores `dir`.
BlockMask gen_structure_mask(SegLengths seg, StructureId structure, RingDirection dir);
BlockPattern structure_pattern(StructureId structure, RingDirection dir);

/// Probe: visibility of each block of a mask; throws on a mixed block.
BlockPattern block_pattern(const BlockMask& mask);
BlockPattern block_pattern(const SegLengths& seg, const std::vector<float>& dense);

BlockPattern transpose(const BlockPattern& p);
std::string pattern_str(const BlockPattern& p);

}  // namespace gsifn
