// SPDX-License-Identifier: Apache-2.0
#include "gsifn/model.hpp"

#include <algorithm>

namespace gsifn {

std::string to_string(FusionKind k) { return k == FusionKind::gsifn ? "gsifn" : "mult"; }

FusionKind parse_fusion(const std::string& s) {
  if (s == "gsifn") return FusionKind::gsifn;
  if (s == "mult") return FusionKind::mult;
  throw ConfigError("unknown model '" + s + "' (expected gsifn or mult)");
}

void ModelConfig::validate() const {
  fusion.validate();
  if (hidden == 0) throw ConfigError("hidden width must be positive");
  if (text_dim == 0 || vision_dim == 0 || audio_dim == 0) throw ConfigError("feature dims must be positive");
  if (mlstm.num_blocks > 0) {
    if (mlstm.input_dim != fusion.d_model || mlstm.hidden_dim != fusion.d_model) {
      throw ConfigError("mlstm dims must equal d_model");
    }
    mlstm.validate();
  }
  if (kind == FusionKind::mult && fusion_modalities != kAllModalities) {
    throw ConfigError("fusion modality ablation is only defined for gsifn");
  }
  if (std::none_of(fusion_modalities.begin(), fusion_modalities.end(), [](bool b) { return b; })) {
    throw ConfigError("fusion needs at least one modality");
  }
}

std::size_t ModelConfig::fusion_width() const {
  const std::size_t k = static_cast<std::size_t>(std::count(fusion_modalities.begin(), fusion_modalities.end(), true));
  return 2 * fusion.d_model * k;
}

std::vector<ModelInput> make_batch(const std::vector<const Sample*>& samples) {
  SegLengths pad{0, 0, 0};
  for (const auto* s : samples) {
    pad.text = std::max(pad.text, s->lengths.text);
    pad.vision = std::max(pad.vision, s->lengths.vision);
    pad.audio = std::max(pad.audio, s->lengths.audio);
  }
  std::vector<ModelInput> out;
  out.reserve(samples.size());
  for (const auto* s : samples) {
    ModelInput in;
    in.id = s->id;
    in.valid = s->lengths;
    in.padded = pad;
    if (s->text.defined()) in.text = pad_rows(s->text, pad.text);
    in.tokens = s->tokens;
    in.vision = pad_rows(s->vision, pad.vision);
    in.audio = pad_rows(s->audio, pad.audio);
    out.push_back(std::move(in));
  }
  return out;
}

template <class T>
Model Model::create(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const std::size_t d = cfg.fusion.d_model;
  if (cfg.vocab > 0) {
    m.text_encoder = ToyTextEncoder::create(ps, "text.encoder", ParamGroup::text, cfg.vocab, cfg.text_dim, rng);
  }
  m.proj_t = Conv1dProjection::create(ps, "text.proj", ParamGroup::text, cfg.text_dim, d, cfg.text_kernel, rng);
  m.proj_v = Conv1dProjection::create(ps, "vision.proj", ParamGroup::vision, cfg.vision_dim, d, cfg.vision_kernel, rng);
  m.proj_a = Conv1dProjection::create(ps, "audio.proj", ParamGroup::audio, cfg.audio_dim, d, cfg.audio_kernel, rng);
  if (cfg.mlstm.num_blocks > 0) {
    m.enh_v = MlstmStack::create(ps, "vision.mlstm", ParamGroup::vision, cfg.mlstm, rng);
    m.enh_a = MlstmStack::create(ps, "audio.mlstm", ParamGroup::audio, cfg.mlstm, rng);
  }
  if (cfg.kind == FusionKind::gsifn) {
    m.gsit = Gsit::create(ps, "gsit", cfg.fusion, rng);
  } else {
    m.mult = Mult::create(ps, "mult", cfg.fusion, rng);
  }
  m.hidden_proj[0] = nn::Linear::create(ps, "head.m.hidden", ParamGroup::other, cfg.fusion_width(), cfg.hidden, rng);
  for (std::size_t u = 1; u < 4; ++u) {
    const std::string tag(1, stream_tag(kStreams[u]));
    m.hidden_proj[u] = nn::Linear::create(ps, "head." + tag + ".hidden", ParamGroup::other, d, cfg.hidden, rng);
  }
  for (std::size_t u = 0; u < 4; ++u) {
    const std::string tag(1, stream_tag(kStreams[u]));
    m.head[u] = nn::Linear::create(ps, "head." + tag + ".out", ParamGroup::other, cfg.hidden, 1, rng);
  }
  return m;
}

namespace {

// Rows past the valid length are padding; zero them so their content never
// reaches a valid position through the convolution window.
template <class T>
Tensor<T> zero_tail(const Tensor<float>& x, std::size_t valid) {
  auto y = x.template cast<T>();
  if (valid >= y.rows()) return y;
  auto& v = y.mutable_values();
  std::fill(v.begin() + valid * y.cols(), v.end(), T(0));
  return y;
}

}  // namespace

template <class T>
std::array<Tensor<T>, 3> Model::encode(const Context<T>& ctx, const ModelInput& in) const {
  Tensor<T> st;
  if (text_encoder) {
    st = (*text_encoder)(ctx, in.tokens);
    if (in.padded.text > st.rows()) {
      st = ops::concat<T>({st, Tensor<T>::zeros({in.padded.text - st.rows(), st.cols()})}, 0);
    }
  } else {
    if (!in.text.defined()) throw Error("model.input", in.id + ": no text features");
    st = zero_tail<T>(in.text, in.valid.text);
  }
  return {proj_t(ctx, st), proj_v(ctx, zero_tail<T>(in.vision, in.valid.vision)),
          proj_a(ctx, zero_tail<T>(in.audio, in.valid.audio))};
}

template <class T>
ModelOutput<T> Model::forward(Context<T>& ctx, const ModelInput& in, std::vector<nn::AttentionRecord>* records) const {
  if (in.valid.total() == 0) throw Error("model.input", in.id + ": length metadata missing");
  const auto x = encode(ctx, in);

  Tensor<T> fused;
  if (gsit) {
    fused = gsit->forward(ctx, x, in.valid, cfg.structure, cfg.fusion_modalities, records);
  } else {
    fused = mult->forward(ctx, x, in.valid, records);
  }

  // Unimodal representations: text at the CLS position, vision/audio at the
  // last valid step of the enhanced sequence.
  std::array<Tensor<T>, 3> last;
  last[0] = ops::slice(x[0], 0, 0, 1);
  const auto xv = cfg.mlstm.num_blocks > 0 ? enh_v.forward(ctx, x[1]) : x[1];
  const auto xa = cfg.mlstm.num_blocks > 0 ? enh_a.forward(ctx, x[2]) : x[2];
  last[1] = ops::slice(xv, 0, in.valid.vision - 1, 1);
  last[2] = ops::slice(xa, 0, in.valid.audio - 1, 1);

  ModelOutput<T> out;
  out.hidden[0] = ops::relu(hidden_proj[0](ctx, fused));
  for (std::size_t u = 1; u < 4; ++u) out.hidden[u] = ops::relu(hidden_proj[u](ctx, last[u - 1]));
  for (std::size_t u = 0; u < 4; ++u) {
    const auto h = u == 0 ? ops::dropout(out.hidden[0], cfg.fusion.dropout, ctx.train, ctx.rng) : out.hidden[u];
    out.pred[u] = head[u](ctx, h);
  }
  return out;
}

#define GSIFN_INSTANTIATE_MODEL(T)                                                                      \
  template Model Model::create<T>(ParamSet<T>&, const ModelConfig&, Rng&);                               \
  template ModelOutput<T> Model::forward<T>(Context<T>&, const ModelInput&,                              \
                                            std::vector<nn::AttentionRecord>*) const;                    \
  template std::array<Tensor<T>, 3> Model::encode<T>(const Context<T>&, const ModelInput&) const;

GSIFN_INSTANTIATE_MODEL(float)
GSIFN_INSTANTIATE_MODEL(double)

}  // namespace gsifn
