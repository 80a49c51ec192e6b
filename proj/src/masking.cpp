// SPDX-License-Identifier: Apache-2.0
#include "gsifn/masking.hpp"

#include <cmath>
#include <sstream>

namespace gsifn {

char modality_tag(Modality m) { return "tva"[static_cast<std::size_t>(m)]; }

std::size_t SegLengths::offset(Modality m) const {
  const auto l = as_array();
  std::size_t off = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) off += l[i];
  return off;
}

void SegLengths::validate() const {
  if (text == 0 || vision == 0 || audio == 0) {
    throw Error("mask.segment", "segment lengths must be >= 1, got (" + std::to_string(text) + "," +
                                    std::to_string(vision) + "," + std::to_string(audio) + ")");
  }
}

std::string to_string(StructureId s) {
  switch (s) {
    case StructureId::original: return "original";
    case StructureId::structure1: return "structure1";
    case StructureId::structure2: return "structure2";
    case StructureId::structure3: return "structure3";
    case StructureId::self_only: return "self_only";
  }
  throw Error("mask.structure", "unknown structure id");
}

std::string to_string(RingDirection d) { return d == RingDirection::forward ? "forward" : "backward"; }

StructureId parse_structure(std::string_view name) {
  for (auto s : kAllStructures)
    if (to_string(s) == name) return s;
  throw Error("mask.structure", "unknown structure id '" + std::string(name) + "'");
}

namespace {

constexpr std::size_t T = 0, V = 1, A = 2;

BlockPattern visible_blocks(std::initializer_list<std::pair<std::size_t, std::size_t>> blocks) {
  BlockPattern p{};
  for (auto [i, j] : blocks) p[i][j] = true;
  return p;
}

}  // namespace

BlockMask::BlockMask(SegLengths seg, const BlockPattern& pattern) : seg_(seg), pattern_(pattern) {
  seg_.validate();
  const std::size_t n = seg_.total();
  dense_.assign(n * n, static_cast<float>(ops::kMaskedLogit));
  for (auto bi : kModalities) {
    for (auto bj : kModalities) {
      if (!pattern_[static_cast<std::size_t>(bi)][static_cast<std::size_t>(bj)]) continue;
      for (std::size_t r = seg_.offset(bi); r < seg_.offset(bi) + seg_[bi]; ++r)
        for (std::size_t c = seg_.offset(bj); c < seg_.offset(bj) + seg_[bj]; ++c) dense_[r * n + c] = 0.0f;
    }
  }
}

BlockMask BlockMask::from_dense(SegLengths seg, std::vector<float> dense) {
  seg.validate();
  if (dense.size() != seg.total() * seg.total()) {
    throw ShapeError("mask of " + std::to_string(dense.size()) + " entries does not fit total length " +
                     std::to_string(seg.total()));
  }
  BlockMask m;
  m.seg_ = seg;
  m.pattern_ = block_pattern(seg, dense);
  m.dense_ = std::move(dense);
  return m;
}

BlockMask gen_interlaced_mask(SegLengths seg, MaskMode mode, RingDirection dir) {
  seg.validate();
  const std::size_t lt = seg.text, lv = seg.vision, la = seg.audio;
  const std::size_t s1[2] = {0, lt};
  const std::size_t s2[2] = {lt, lt + lv};
  const std::size_t s3[2] = {lt + lv, lt + lv + la};
  const std::size_t lsum = lt + lv + la;
  const bool inter = mode == MaskMode::inter;
  const bool fwd = dir == RingDirection::forward;

  auto zero = [](std::vector<float>& row, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) row[k] = 0.0f;
  };

  std::vector<float> stacked;
  stacked.reserve(lsum * lsum);
  const std::size_t lens[3] = {lt, lv, la};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t e = 0; e < lens[i]; ++e) {
      std::vector<float> row(lsum, 1.0f);
      if (i == 0) {
        zero(row, 0, s1[1]);
        if (inter) fwd ? zero(row, s3[0], lsum) : zero(row, s2[0], s2[1]);
      } else if (i == 1) {
        zero(row, s2[0], s2[1]);
        if (inter) fwd ? zero(row, 0, s1[1]) : zero(row, s3[0], lsum);
      } else {
        zero(row, s3[0], s3[1]);
        if (inter) fwd ? zero(row, s2[0], s2[1]) : zero(row, 0, s1[1]);
      }
      stacked.insert(stacked.end(), row.begin(), row.end());
    }
  }
  if (!inter) {
    for (auto& v : stacked) v = std::abs(v - 1.0f);
  }
  // ones -> visible (0), zeros -> hidden
  for (auto& v : stacked) v = v == 1.0f ? 0.0f : static_cast<float>(ops::kMaskedLogit);
  return BlockMask::from_dense(seg, std::move(stacked));
}

BlockPattern all_inter_pattern() { return visible_blocks({{T, V}, {T, A}, {V, T}, {V, A}, {A, T}, {A, V}}); }

BlockPattern interlaced_pattern(MaskMode mode, RingDirection dir) {
  if (mode == MaskMode::intra) {
    BlockPattern p = all_inter_pattern();
    for (auto& row : p)
      for (auto& b : row) b = !b;
    return p;
  }
  return dir == RingDirection::forward ? visible_blocks({{T, V}, {V, A}, {A, T}})
                                       : visible_blocks({{T, A}, {V, T}, {A, V}});
}

BlockPattern structure_pattern(StructureId structure, RingDirection dir) {
  const bool fwd = dir == RingDirection::forward;
  switch (structure) {
    case StructureId::original:
      return interlaced_pattern(MaskMode::inter, dir);
    case StructureId::structure1:
      return fwd ? visible_blocks({{T, A}, {V, A}, {A, T}}) : visible_blocks({{T, V}, {V, T}, {A, T}});
    case StructureId::structure2:
      return fwd ? visible_blocks({{T, V}, {V, T}, {A, V}}) : visible_blocks({{T, A}, {V, A}, {A, T}});
    case StructureId::structure3:
      return fwd ? visible_blocks({{T, V}, {V, A}, {A, V}}) : visible_blocks({{T, A}, {V, T}, {A, T}});
    case StructureId::self_only:
      return all_inter_pattern();
  }
  throw Error("mask.structure", "unknown structure id");
}

BlockMask gen_structure_mask(SegLengths seg, StructureId structure, RingDirection dir) {
  return BlockMask(seg, structure_pattern(structure, dir));
}

BlockPattern block_pattern(const SegLengths& seg, const std::vector<float>& dense) {
  const std::size_t n = seg.total();
  BlockPattern p{};
  for (auto bi : kModalities) {
    for (auto bj : kModalities) {
      const std::size_t r0 = seg.offset(bi), c0 = seg.offset(bj);
      const bool first = !ops::is_masked(dense[r0 * n + c0]);
      for (std::size_t r = r0; r < r0 + seg[bi]; ++r)
        for (std::size_t c = c0; c < c0 + seg[bj]; ++c) {
          const float v = dense[r * n + c];
          const bool vis = !ops::is_masked(v);
          if (vis != first || (vis && v != 0.0f) || (!vis && v != static_cast<float>(ops::kMaskedLogit))) {
            throw Error("mask.non_uniform", std::string("non-uniform block (") + modality_tag(bi) + "," +
                                                modality_tag(bj) + ")");
          }
        }
      p[static_cast<std::size_t>(bi)][static_cast<std::size_t>(bj)] = first;
    }
  }
  return p;
}

BlockPattern block_pattern(const BlockMask& mask) { return block_pattern(mask.seg(), mask.dense()); }

BlockPattern transpose(const BlockPattern& p) {
  BlockPattern t{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) t[j][i] = p[i][j];
  return t;
}

std::string pattern_str(const BlockPattern& p) {
  std::ostringstream os;
  for (std::size_t i = 0; i < 3; ++i) {
    if (i) os << '/';
    for (std::size_t j = 0; j < 3; ++j) os << (p[i][j] ? '1' : '0');
  }
  return os.str();
}

}  // namespace gsifn
