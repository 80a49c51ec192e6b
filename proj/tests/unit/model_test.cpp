// SPDX-License-Identifier: Apache-2.0
#include "gsifn/model.hpp"

#include "gsifn/cost.hpp"
#include "testing.hpp"

#include <gtest/gtest.h>

namespace gsifn {
namespace {

using testing::random_tensor;

ModelConfig tiny(FusionKind kind = FusionKind::gsifn, std::size_t d = 8) {
  ModelConfig c;
  c.kind = kind;
  c.fusion.d_model = d;
  c.fusion.heads = 2;
  c.fusion.ffn_mult = 2;
  c.fusion.dropout = 0.1;
  c.hidden = 6;
  c.text_dim = 5;
  c.vision_dim = 4;
  c.audio_dim = 3;
  c.mlstm.input_dim = c.mlstm.hidden_dim = d;
  c.mlstm.num_blocks = 1;
  return c;
}

ModelInput input(const ModelConfig& cfg, SegLengths valid, SegLengths padded, Rng& rng) {
  ModelInput in;
  in.id = "x";
  in.valid = valid;
  in.padded = padded;
  in.text = pad_rows(random_tensor<float>({valid.text, cfg.text_dim}, rng), padded.text);
  in.vision = pad_rows(random_tensor<float>({valid.vision, cfg.vision_dim}, rng), padded.vision);
  in.audio = pad_rows(random_tensor<float>({valid.audio, cfg.audio_dim}, rng), padded.audio);
  return in;
}

template <class T>
void expect_same(const std::array<Tensor<T>, 4>& a, const std::array<Tensor<T>, 4>& b, std::size_t first) {
  for (std::size_t u = first; u < 4; ++u) EXPECT_EQ(a[u].to_vector(), b[u].to_vector()) << u;
}

TEST(Model, ZeroInputsGiveZeroPredictions) {
  for (auto kind : {FusionKind::gsifn, FusionKind::mult}) {
    const auto cfg = tiny(kind);
    ParamSet<double> ps;
    Rng rng(1);
    const auto m = Model::create(ps, cfg, rng);
    ModelInput in;
    in.id = "zero";
    in.valid = in.padded = {3, 2, 2};
    in.text = Tensor<float>::zeros({3, cfg.text_dim});
    in.vision = Tensor<float>::zeros({2, cfg.vision_dim});
    in.audio = Tensor<float>::zeros({2, cfg.audio_dim});
    Context<double> ctx(ps);
    const auto out = m.forward(ctx, in);
    for (std::size_t u = 0; u < 4; ++u) {
      EXPECT_EQ(out.pred[u].shape(), (Shape{1, 1}));
      EXPECT_EQ(out.pred[u].item(), 0.0) << u;
      EXPECT_EQ(out.hidden[u].shape(), (Shape{1, cfg.hidden}));
    }
  }
}

TEST(Model, PaddedTailLeavesUnimodalStatesUnchanged) {
  const auto cfg = tiny();
  ParamSet<float> ps;
  Rng rng(2);
  const auto m = Model::create(ps, cfg, rng);
  auto in = input(cfg, {3, 2, 4}, {5, 6, 6}, rng);
  Context<float> ctx(ps);
  const auto base = m.forward(ctx, in);
  in.vision.mutable_values()[3 * cfg.vision_dim] = 100.0f;
  in.vision.mutable_values()[5 * cfg.vision_dim + 1] = -7.0f;
  in.audio.mutable_values()[4 * cfg.audio_dim + 2] = 9.0f;
  in.text.mutable_values()[4 * cfg.text_dim] = 3.0f;
  const auto moved = m.forward(ctx, in);
  expect_same(base.hidden, moved.hidden, 1);
  expect_same(base.pred, moved.pred, 0);
}

TEST(Model, ValidPrefixDecidesUnimodalStates) {
  // Padding is invisible to the unimodal branches: padded and unpadded
  // inputs agree on h_t, h_v, h_a.
  const auto cfg = tiny();
  ParamSet<double> ps;
  Rng rng(3);
  const auto m = Model::create(ps, cfg, rng);
  auto padded = input(cfg, {3, 2, 4}, {5, 6, 6}, rng);
  ModelInput tight = padded;
  tight.padded = tight.valid;
  tight.text = ops::slice(padded.text, 0, 0, 3);
  tight.vision = ops::slice(padded.vision, 0, 0, 2);
  tight.audio = ops::slice(padded.audio, 0, 0, 4);
  Context<double> ctx(ps);
  const auto a = m.forward(ctx, padded), b = m.forward(ctx, tight);
  for (std::size_t u = 1; u < 4; ++u)
    for (std::size_t j = 0; j < cfg.hidden; ++j) EXPECT_NEAR(a.hidden[u][j], b.hidden[u][j], 1e-12);
}

TEST(Model, GradientsMatchFiniteDifferences) {
  const auto cfg = tiny();
  ParamSet<double> ps;
  Rng rng(4);
  const auto m = Model::create(ps, cfg, rng);
  const auto in = input(cfg, {3, 2, 2}, {3, 2, 2}, rng);
  const double err = testing::param_gradient_error(
      [&](Context<double>& ctx) {
        const auto out = m.forward(ctx, in);
        auto total = ops::sum(ops::tanh(out.hidden[0]));
        for (const auto& p : out.pred) total = ops::add(total, ops::sum(p));
        return total;
      },
      ps, 1e-5, 1e-7, 3);
  EXPECT_LE(err, 1e-4);
}

TEST(Model, TokenModeUsesTheTextEncoder) {
  auto cfg = tiny();
  cfg.vocab = 30;
  ParamSet<float> ps;
  Rng rng(5);
  const auto m = Model::create(ps, cfg, rng);
  ModelInput in = input(cfg, {4, 2, 2}, {6, 2, 2}, rng);
  in.text = {};
  in.tokens = {kClsToken, 7, 8, kSepToken};
  Context<float> ctx(ps);
  const auto x = m.encode(ctx, in);
  EXPECT_EQ(x[0].shape(), (Shape{6, cfg.fusion.d_model}));
  EXPECT_NO_THROW(ps.id_of("text.encoder.embed"));
  EXPECT_TRUE(std::isfinite(m.forward(ctx, in).pred[0].item()));
}

TEST(Model, FusionAblationNarrowsTheFusedVector) {
  auto cfg = tiny();
  cfg.fusion_modalities = {true, false, true};
  EXPECT_EQ(cfg.fusion_width(), 2 * 2 * cfg.fusion.d_model);
  ParamSet<float> ps;
  Rng rng(6);
  const auto m = Model::create(ps, cfg, rng);
  auto in = input(cfg, {3, 2, 2}, {3, 2, 2}, rng);
  Context<float> ctx(ps);
  const auto base = m.forward(ctx, in).pred[0].item();
  // Vision is out of fusion: the fused prediction ignores it.
  in.vision.mutable_values()[0] += 5.0f;
  EXPECT_EQ(m.forward(ctx, in).pred[0].item(), base);
  EXPECT_EQ(count_params(ps).total, model_params(cfg));
}

TEST(Model, ConfigValidation) {
  auto cfg = tiny();
  cfg.mlstm.input_dim = 4;
  ParamSet<float> ps;
  Rng rng(7);
  EXPECT_THROW(Model::create(ps, cfg, rng), ConfigError);
  cfg = tiny(FusionKind::mult);
  cfg.fusion_modalities = {true, true, false};
  EXPECT_THROW(Model::create(ps, cfg, rng), ConfigError);
  cfg = tiny();
  cfg.fusion_modalities = {false, false, false};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Model, MissingLengthsRejected) {
  const auto cfg = tiny();
  ParamSet<float> ps;
  Rng rng(8);
  const auto m = Model::create(ps, cfg, rng);
  auto in = input(cfg, {3, 2, 2}, {3, 2, 2}, rng);
  in.valid = {0, 0, 0};
  Context<float> ctx(ps);
  try {
    m.forward(ctx, in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "model.input");
  }
}

TEST(Model, SameSeedSameParameters) {
  const auto cfg = tiny();
  ParamSet<float> a, b;
  Rng ra(9), rb(9);
  Model::create(a, cfg, ra);
  Model::create(b, cfg, rb);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value.to_vector(), b[i].value.to_vector());
}

TEST(MakeBatch, PadsToBatchMaximum) {
  Rng rng(10);
  Sample s1, s2;
  s1.id = "a";
  s1.lengths = {2, 3, 1};
  s1.text = random_tensor<float>({2, 4}, rng);
  s1.vision = random_tensor<float>({3, 2}, rng);
  s1.audio = random_tensor<float>({1, 2}, rng);
  s2.id = "b";
  s2.lengths = {4, 1, 2};
  s2.text = random_tensor<float>({4, 4}, rng);
  s2.vision = random_tensor<float>({1, 2}, rng);
  s2.audio = random_tensor<float>({2, 2}, rng);
  const auto batch = make_batch({&s1, &s2});
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_EQ(batch[0].padded, (SegLengths{4, 3, 2}));
  EXPECT_EQ(batch[1].padded, (SegLengths{4, 3, 2}));
  EXPECT_EQ(batch[0].valid, s1.lengths);
  EXPECT_EQ(batch[0].text.shape(), (Shape{4, 4}));
  EXPECT_EQ(batch[1].vision.shape(), (Shape{3, 2}));
}

}  // namespace
}  // namespace gsifn
