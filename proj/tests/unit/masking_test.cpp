// SPDX-License-Identifier: Apache-2.0
#include "gsifn/masking.hpp"

#include <gtest/gtest.h>

namespace gsifn {
namespace {

constexpr std::size_t T = 0, V = 1, A = 2;

BlockPattern grid(std::initializer_list<std::pair<std::size_t, std::size_t>> visible) {
  BlockPattern p{};
  for (auto [i, j] : visible) p[i][j] = true;
  return p;
}

// Literal transcriptions of the ring matrices (row = aggregating modality,
// column = source), one pair per structure variant.
struct RingCase {
  StructureId id;
  BlockPattern fwd;
  BlockPattern bwd;
};

const RingCase kRings[] = {
    {StructureId::original, grid({{T, V}, {V, A}, {A, T}}), grid({{T, A}, {V, T}, {A, V}})},
    {StructureId::structure1, grid({{T, A}, {V, A}, {A, T}}), grid({{T, V}, {V, T}, {A, T}})},
    {StructureId::structure2, grid({{T, V}, {V, T}, {A, V}}), grid({{T, A}, {V, A}, {A, T}})},
    {StructureId::structure3, grid({{T, V}, {V, A}, {A, V}}), grid({{T, A}, {V, T}, {A, T}})},
    {StructureId::self_only, grid({{T, V}, {T, A}, {V, T}, {V, A}, {A, T}, {A, V}}),
     grid({{T, V}, {T, A}, {V, T}, {V, A}, {A, T}, {A, V}})},
};

const BlockPattern kDiagonal = grid({{T, T}, {V, V}, {A, A}});

TEST(InterlacedMask, ForwardRingSmallSeg) {
  auto m = gen_interlaced_mask({2, 1, 1}, MaskMode::inter, RingDirection::forward);
  EXPECT_EQ(block_pattern(m), grid({{T, V}, {V, A}, {A, T}}));
}

TEST(InterlacedMask, BackwardRingSmallSeg) {
  auto m = gen_interlaced_mask({2, 1, 1}, MaskMode::inter, RingDirection::backward);
  EXPECT_EQ(block_pattern(m), grid({{T, A}, {V, T}, {A, V}}));
}

TEST(InterlacedMask, IntraKeepsDiagonalOnly) {
  for (auto dir : {RingDirection::forward, RingDirection::backward}) {
    auto m = gen_interlaced_mask({3, 2, 2}, MaskMode::intra, dir);
    EXPECT_EQ(block_pattern(m), kDiagonal);
  }
}

TEST(InterlacedMask, ZeroLengthSegmentRejected) {
  EXPECT_THROW(gen_interlaced_mask({0, 1, 1}, MaskMode::inter, RingDirection::forward), Error);
  EXPECT_THROW(gen_structure_mask({1, 1, 0}, StructureId::original, RingDirection::forward), Error);
}

TEST(InterlacedMask, EntriesAreZeroOrMaskedLogit) {
  auto m = gen_interlaced_mask({4, 3, 2}, MaskMode::inter, RingDirection::forward);
  ASSERT_EQ(m.dense().size(), 81u);
  for (float v : m.dense()) EXPECT_TRUE(v == 0.0f || v == static_cast<float>(ops::kMaskedLogit));
  // Row 0 is text; only the vision columns 4..6 are visible.
  for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(m.visible(0, c), c >= 4 && c < 7) << c;
}

TEST(InterlacedMask, ProcedureAgreesWithBlockTranscription) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    SegLengths seg{1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(9)};
    for (auto dir : {RingDirection::forward, RingDirection::backward}) {
      auto a = gen_interlaced_mask(seg, MaskMode::inter, dir);
      BlockMask b(seg, interlaced_pattern(MaskMode::inter, dir));
      EXPECT_EQ(a.dense(), b.dense());
    }
    auto a = gen_interlaced_mask(seg, MaskMode::intra, RingDirection::forward);
    BlockMask b(seg, interlaced_pattern(MaskMode::intra, RingDirection::forward));
    EXPECT_EQ(a.dense(), b.dense());
  }
}

TEST(InterlacedMask, RingsAreTransposedPermutationsPartitioningTheGrid) {
  const auto f = interlaced_pattern(MaskMode::inter, RingDirection::forward);
  const auto b = interlaced_pattern(MaskMode::inter, RingDirection::backward);
  EXPECT_EQ(transpose(f), b);
  for (std::size_t i = 0; i < 3; ++i) {
    int row_f = 0, row_b = 0, col_f = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      row_f += f[i][j];
      row_b += b[i][j];
      col_f += f[j][i];
      EXPECT_EQ(int(f[i][j]) + int(b[i][j]) + int(kDiagonal[i][j]), 1) << i << j;
    }
    EXPECT_EQ(row_f, 1);
    EXPECT_EQ(row_b, 1);
    EXPECT_EQ(col_f, 1);
    EXPECT_FALSE(f[i][i]);
  }
}

TEST(InterlacedMask, IntraComplementsAllInter) {
  const auto inter = all_inter_pattern();
  const auto intra = interlaced_pattern(MaskMode::intra, RingDirection::forward);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NE(inter[i][j], intra[i][j]);
  EXPECT_EQ(intra, kDiagonal);
}

TEST(InterlacedMask, Pure) {
  auto a = gen_interlaced_mask({5, 7, 3}, MaskMode::inter, RingDirection::backward);
  auto b = gen_interlaced_mask({5, 7, 3}, MaskMode::inter, RingDirection::backward);
  EXPECT_EQ(a.dense(), b.dense());
}

TEST(StructureMask, MatchesLiteralTranscription) {
  for (const auto& c : kRings) {
    EXPECT_EQ(block_pattern(gen_structure_mask({1, 1, 1}, c.id, RingDirection::forward)), c.fwd) << to_string(c.id);
    EXPECT_EQ(block_pattern(gen_structure_mask({1, 1, 1}, c.id, RingDirection::backward)), c.bwd)
        << to_string(c.id);
  }
}

TEST(StructureMask, OriginalEqualsInterlacedInter) {
  for (auto dir : {RingDirection::forward, RingDirection::backward}) {
    EXPECT_EQ(gen_structure_mask({1, 1, 1}, StructureId::original, dir).dense(),
              gen_interlaced_mask({1, 1, 1}, MaskMode::inter, dir).dense());
    EXPECT_EQ(gen_structure_mask({3, 4, 2}, StructureId::original, dir).dense(),
              gen_interlaced_mask({3, 4, 2}, MaskMode::inter, dir).dense());
  }
}

TEST(StructureMask, SelfOnlyIgnoresDirection) {
  auto f = gen_structure_mask({2, 3, 1}, StructureId::self_only, RingDirection::forward);
  auto b = gen_structure_mask({2, 3, 1}, StructureId::self_only, RingDirection::backward);
  EXPECT_EQ(f.dense(), b.dense());
  EXPECT_EQ(f.pattern(), all_inter_pattern());
}

TEST(StructureMask, EveryRowHasAVisibleEntry) {
  for (auto s : kAllStructures)
    for (auto dir : {RingDirection::forward, RingDirection::backward}) {
      auto p = structure_pattern(s, dir);
      for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(p[i][0] || p[i][1] || p[i][2]) << to_string(s);
    }
}

TEST(StructureMask, ParseRoundTrip) {
  for (auto s : kAllStructures) EXPECT_EQ(parse_structure(to_string(s)), s);
  EXPECT_THROW(parse_structure("structure9"), Error);
}

TEST(BlockPatternProbe, AllVisibleMask) {
  SegLengths seg{2, 2, 1};
  auto m = BlockMask::from_dense(seg, std::vector<float>(25, 0.0f));
  BlockPattern all{};
  for (auto& r : all) r = {true, true, true};
  EXPECT_EQ(m.pattern(), all);
}

TEST(BlockPatternProbe, MixedBlockRejected) {
  SegLengths seg{2, 1, 1};
  std::vector<float> d(16, 0.0f);
  d[1] = static_cast<float>(ops::kMaskedLogit);  // inside the (t, t) block only
  try {
    BlockMask::from_dense(seg, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "mask.non_uniform");
  }
}

TEST(BlockPatternProbe, WrongSizeRejected) {
  EXPECT_THROW(BlockMask::from_dense({1, 1, 1}, std::vector<float>(8, 0.0f)), ShapeError);
}

TEST(BlockPatternProbe, PatternString) {
  EXPECT_EQ(pattern_str(kDiagonal), "100/010/001");
}

}  // namespace
}  // namespace gsifn
