// SPDX-License-Identifier: Apache-2.0
#include "gsifn/mult.hpp"

#include <set>

#include "gsifn/gsit.hpp"
#include "reference.hpp"
#include "testing.hpp"

#include <gtest/gtest.h>

namespace gsifn {
namespace {

using testing::random_tensor;
using TD = Tensor<double>;
namespace ref = reference;

nn::TransformerConfig small_cfg(std::size_t d = 8, std::size_t heads = 2) {
  nn::TransformerConfig c;
  c.d_model = d;
  c.heads = heads;
  c.ffn_mult = 2;
  c.dropout = 0.1;
  return c;
}

TEST(CrossModal, IdenticalSourceEqualsSelfAttention) {
  Rng rng(1);
  ParamSet<double> ps;
  const auto cfg = small_cfg();
  auto tr = nn::Transformer::create(ps, "x", ParamGroup::other, cfg, rng);
  Context<double> ctx(ps);
  const auto x = random_tensor({5, 8}, rng);
  const auto cross = crossmodal_transformer(ctx, tr, x, x);
  const auto self = tr.forward<double>(ctx, x, nullptr);
  EXPECT_EQ(cross.to_vector(), self.to_vector());
  const auto oracle = ref::transformer(ps, "x", cfg, ref::from_tensor(x), {});
  EXPECT_LE(ref::max_rel_error(ref::from_tensor(cross), oracle), 1e-6);
}

TEST(CrossModal, OutputHasTargetLength) {
  Rng rng(2);
  ParamSet<double> ps;
  auto tr = nn::Transformer::create(ps, "x", ParamGroup::other, small_cfg(), rng);
  Context<double> ctx(ps);
  EXPECT_EQ(crossmodal_transformer(ctx, tr, random_tensor({4, 8}, rng), random_tensor({7, 8}, rng)).shape(),
            (Shape{4, 8}));
}

TEST(CrossModal, DimMismatchRejected) {
  Rng rng(3);
  ParamSet<double> ps;
  auto tr = nn::Transformer::create(ps, "x", ParamGroup::other, small_cfg(), rng);
  Context<double> ctx(ps);
  EXPECT_THROW(crossmodal_transformer(ctx, tr, random_tensor({4, 8}, rng), random_tensor({4, 6}, rng)), ShapeError);
}

TEST(CrossModal, OneByOneHandInstance) {
  // d = 2, one head, identity projections, zero biases, no FFN. A length-1
  // source gets softmax weight 1, so the output is target + LN(source).
  nn::TransformerConfig cfg;
  cfg.d_model = 2;
  cfg.heads = 1;
  cfg.ffn_mult = 0;
  Rng rng(4);
  ParamSet<double> ps;
  auto tr = nn::Transformer::create(ps, "x", ParamGroup::other, cfg, rng);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].name.ends_with(".w")) ps[i].value = TD({2, 2}, {1, 0, 0, 1});
    if (ps[i].name.ends_with(".b")) ps[i].value = TD::zeros(ps[i].value.shape());
  }
  Context<double> ctx(ps);
  const TD target({1, 2}, {1, 3}), source({1, 2}, {2, -2});
  const auto y = crossmodal_transformer(ctx, tr, target, source);
  const double s = 2.0 / std::sqrt(4.0 + 1e-5);
  EXPECT_NEAR(y[0], 1 + s, 1e-12);
  EXPECT_NEAR(y[1], 3 - s, 1e-12);
  const auto src = ref::from_tensor(source);
  const auto oracle = ref::transformer(ps, "x", cfg, ref::from_tensor(target), {}, &src);
  EXPECT_NEAR(oracle[0][0], 1 + s, 1e-12);
}

TEST(CrossModal, MatchesBruteForceOracle) {
  Rng rng(5);
  ParamSet<double> ps;
  auto cfg = small_cfg();
  cfg.layers = 2;
  auto tr = nn::Transformer::create(ps, "x", ParamGroup::other, cfg, rng);
  Context<double> ctx(ps);
  const auto t = random_tensor({3, 8}, rng), s = random_tensor({6, 8}, rng);
  const auto src = ref::from_tensor(s);
  const auto oracle = ref::transformer(ps, "x", cfg, ref::from_tensor(t), {}, &src);
  EXPECT_LE(ref::max_rel_error(ref::from_tensor(crossmodal_transformer(ctx, tr, t, s)), oracle), 1e-9);
}

struct MultFixture {
  ParamSet<double> ps;
  Mult m;
  nn::TransformerConfig cfg = small_cfg();
  explicit MultFixture(std::uint64_t seed) {
    Rng rng(seed);
    m = Mult::create(ps, "mult", cfg, rng);
  }
};

TEST(Mult, NineTransformerStacks) {
  MultFixture f(6);
  EXPECT_EQ(Mult::kStacks, 9u);
  std::set<std::string> stacks;
  for (std::size_t i = 0; i < f.ps.size(); ++i) {
    const auto& n = f.ps[i].name;
    stacks.insert(n.substr(0, n.find('.', n.find('.') + 1)));
  }
  EXPECT_EQ(stacks.size(), 9u);
  EXPECT_EQ(Gsit::kStacks, 3u);
}

TEST(Mult, MatchesBranchwiseOracle) {
  MultFixture f(7);
  Rng rng(8);
  std::array<TD, 3> x{random_tensor({4, 8}, rng), random_tensor({3, 8}, rng), random_tensor({5, 8}, rng)};
  const SegLengths valid{3, 3, 2};
  Context<double> ctx(f.ps);
  const auto y = f.m.forward(ctx, x, valid);
  ASSERT_EQ(y.shape(), (Shape{1, 48}));

  auto wide = f.cfg;
  wide.d_model *= 2;
  const char tags[3] = {'t', 'v', 'a'};
  ref::Mat expect(1);
  for (std::size_t u = 0; u < 3; ++u) {
    ref::Mat joined;
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == u) continue;
      const auto src = ref::from_tensor(x[j]);
      const auto c = ref::transformer(f.ps, std::string("mult.cross_") + tags[j] + "_to_" + tags[u], f.cfg,
                                      ref::from_tensor(x[u]), {}, &src);
      joined = joined.empty() ? c : ref::hconcat(joined, c);
    }
    const auto h = ref::transformer(f.ps, std::string("mult.self_") + tags[u], wide, joined, {});
    const auto& row = h[valid.as_array()[u] - 1];
    expect[0].insert(expect[0].end(), row.begin(), row.end());
  }
  EXPECT_LE(ref::max_rel_error(ref::from_tensor(y), expect), 1e-9);
}

TEST(Mult, ParametersAtLeastThreeTimesGsit) {
  for (std::size_t d : {8u, 32u, 64u}) {
    auto cfg = small_cfg(d, 4);
    Rng rng(9);
    ParamSet<float> pm, pg;
    Mult::create(pm, "mult", cfg, rng);
    Gsit::create(pg, "gsit", cfg, rng);
    EXPECT_GE(static_cast<double>(pm.scalar_count()) / pg.scalar_count(), 3.0) << d;
  }
}

TEST(Mult, GradientsMatchFiniteDifferences) {
  auto cfg = small_cfg(4, 2);
  cfg.dropout = 0.0;
  ParamSet<double> ps;
  Rng rng(10);
  auto m = Mult::create(ps, "mult", cfg, rng);
  std::array<TD, 3> x{random_tensor({2, 4}, rng), random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)};
  const double err = testing::param_gradient_error(
      [&](Context<double>& ctx) { return ops::sum(ops::tanh(m.forward(ctx, x, {2, 3, 2}))); }, ps, 1e-5, 1e-7, 3);
  EXPECT_LE(err, 1e-4);
}

}  // namespace
}  // namespace gsifn
