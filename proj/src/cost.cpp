// SPDX-License-Identifier: Apache-2.0
#include "gsifn/cost.hpp"

#include <json.hpp>

namespace gsifn {

std::uint64_t FlopSheet::total() const {
  std::uint64_t n = 0;
  for (const auto& [k, v] : terms) n += v;
  return n;
}

std::uint64_t FlopSheet::term(const std::string& term) const {
  std::uint64_t n = 0;
  const std::string suffix = "." + term;
  for (const auto& [k, v] : terms) {
    if (k.size() >= suffix.size() && k.compare(k.size() - suffix.size(), suffix.size(), suffix) == 0) n += v;
  }
  return n;
}

void FlopSheet::merge(const FlopSheet& other) {
  for (const auto& [k, v] : other.terms) terms[k] += v;
}

FlopSheet transformer_flops(const nn::TransformerConfig& cfg, std::size_t tq, std::size_t ts, bool cross,
                            const std::string& scope) {
  using U = std::uint64_t;
  const U d = cfg.d_model, h = cfg.heads, hd = cfg.resolved_head_dim(), inner = h * hd;
  const U q = tq, s = ts;
  FlopSheet f;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    f.add(scope + ".norm", kFlopsPerNormElement * q * d);
    if (cross) f.add(scope + ".norm", kFlopsPerNormElement * s * d);
    f.add(scope + ".projection", 2 * q * d * inner + 2 * 2 * s * d * inner + 2 * q * inner * d);
    f.add(scope + ".scores", h * 2 * q * hd * s);
    f.add(scope + ".softmax", kFlopsPerSoftmaxElement * h * q * s);
    f.add(scope + ".mixing", h * 2 * q * s * hd);
    if (cfg.ffn_mult > 0) {
      const U w = cfg.ffn_mult * d;
      f.add(scope + ".norm", kFlopsPerNormElement * q * d);
      f.add(scope + ".ffn", 2 * q * d * w + 2 * q * w * d);
    }
  }
  return f;
}

FlopSheet fusion_flops(const ModelConfig& cfg, const SegLengths& seg) {
  FlopSheet f;
  auto wide = cfg.fusion;
  wide.d_model = 2 * cfg.fusion.d_model;
  wide.head_dim = cfg.fusion.head_dim ? 2 * cfg.fusion.head_dim : 0;
  if (cfg.kind == FusionKind::gsifn) {
    std::size_t total = 0;
    for (std::size_t u = 0; u < 3; ++u)
      if (cfg.fusion_modalities[u]) total += seg.as_array()[u];
    f.merge(transformer_flops(cfg.fusion, total, total, false, "fusion"));
    f.merge(transformer_flops(cfg.fusion, total, total, false, "fusion"));
    f.merge(transformer_flops(wide, total, total, false, "fusion"));
  } else {
    const auto l = seg.as_array();
    for (std::size_t u = 0; u < 3; ++u) {
      for (std::size_t j = 0; j < 3; ++j)
        if (j != u) f.merge(transformer_flops(cfg.fusion, l[u], l[j], true, "fusion"));
      f.merge(transformer_flops(wide, l[u], l[u], false, "fusion"));
    }
  }
  return f;
}

FlopSheet model_flops(const ModelConfig& cfg, const SegLengths& seg) {
  using U = std::uint64_t;
  const U d = cfg.fusion.d_model, w = cfg.hidden;
  FlopSheet f;
  f.add("encoder.conv", 2 * U(seg.text) * cfg.text_kernel * cfg.text_dim * d);
  f.add("encoder.conv", 2 * U(seg.vision) * cfg.vision_kernel * cfg.vision_dim * d);
  f.add("encoder.conv", 2 * U(seg.audio) * cfg.audio_kernel * cfg.audio_dim * d);
  for (U t : {U(seg.vision), U(seg.audio)}) {
    for (std::size_t b = 0; b < cfg.mlstm.num_blocks; ++b) {
      f.add("mlstm.norm", kFlopsPerNormElement * t * d);
      f.add("mlstm.projection", 4 * 2 * t * d * d + 2 * 2 * t * d);
      if (cfg.mlstm.mode == MlstmMode::parallel) {
        f.add("mlstm.scores", 2 * t * d * t);
        f.add("mlstm.mixing", 2 * t * t * d);
      } else {
        f.add("mlstm.recurrence", t * (4 * d * d + 10 * d));
      }
    }
  }
  f.merge(fusion_flops(cfg, seg));
  f.add("heads.head", 2 * U(cfg.fusion_width()) * w + 3 * 2 * d * w + 4 * 2 * w);
  return f;
}

ParamReport count_params(const ParamSet<float>& ps) {
  ParamReport r;
  for (const auto& p : ps) {
    r.total += p.value.size();
    const auto first = p.name.find('.');
    const auto second = first == std::string::npos ? first : p.name.find('.', first + 1);
    r.by_module[p.name.substr(0, second)] += p.value.size();
  }
  return r;
}

std::uint64_t transformer_params(const nn::TransformerConfig& cfg) {
  using U = std::uint64_t;
  const U d = cfg.d_model, inner = U(cfg.heads) * cfg.resolved_head_dim();
  U layer = 2 * d + 3 * (d * inner + inner) + inner * d + d;
  if (cfg.ffn_mult > 0) {
    const U w = cfg.ffn_mult * d;
    layer += 2 * d + d * w + w + w * d + d;
  }
  return cfg.layers * layer;
}

std::uint64_t mlstm_params(const MlstmConfig& cfg) {
  using U = std::uint64_t;
  const U in = cfg.input_dim, d = cfg.hidden_dim;
  return cfg.num_blocks * (2 * in + 4 * (in * d + d) + 2 * (in + 1));
}

std::uint64_t fusion_params(const ModelConfig& cfg) {
  auto wide = cfg.fusion;
  wide.d_model = 2 * cfg.fusion.d_model;
  wide.head_dim = cfg.fusion.head_dim ? 2 * cfg.fusion.head_dim : 0;
  if (cfg.kind == FusionKind::gsifn) return 2 * transformer_params(cfg.fusion) + transformer_params(wide);
  return 6 * transformer_params(cfg.fusion) + 3 * transformer_params(wide);
}

std::uint64_t model_params(const ModelConfig& cfg) {
  using U = std::uint64_t;
  const U d = cfg.fusion.d_model, w = cfg.hidden;
  U n = U(cfg.vocab) * cfg.text_dim;
  n += U(cfg.text_kernel) * cfg.text_dim * d + d;
  n += U(cfg.vision_kernel) * cfg.vision_dim * d + d;
  n += U(cfg.audio_kernel) * cfg.audio_dim * d + d;
  n += 2 * mlstm_params(cfg.mlstm);
  n += fusion_params(cfg);
  n += U(cfg.fusion_width()) * w + w + 3 * (d * w + w) + 4 * (w + 1);
  return n;
}

CostReport cost_report(const ModelConfig& cfg, const SegLengths& seg) {
  seg.validate();
  ParamSet<float> ps;
  Rng rng(0);
  const auto model = Model::create(ps, cfg, rng);
  CostReport r;
  r.model = to_string(cfg.kind);
  r.seg = seg;
  r.params = count_params(ps);
  for (const auto& [k, v] : r.params.by_module) {
    if (k.rfind(cfg.kind == FusionKind::gsifn ? "gsit." : "mult.", 0) == 0) r.fusion_params += v;
  }
  r.flops = model_flops(cfg, seg);
  r.fusion_flops = fusion_flops(cfg, seg).total();
  r.transformer_stacks = model.gsit ? Gsit::kStacks : Mult::kStacks;
  return r;
}

FlopCounter instrumented_flops(const ModelConfig& cfg, const SegLengths& seg, bool fusion_only) {
  seg.validate();
  ParamSet<float> ps;
  Rng rng(0);
  const auto model = Model::create(ps, cfg, rng);
  Context<float> ctx(ps);
  ModelInput in;
  in.id = "probe";
  in.valid = seg;
  in.padded = seg;
  if (cfg.vocab > 0) {
    in.tokens.assign(seg.text, kSepToken + 1);
    in.tokens.front() = kClsToken;
    in.tokens.back() = kSepToken;
  } else {
    in.text = Tensor<float>::zeros({seg.text, cfg.text_dim});
  }
  in.vision = Tensor<float>::zeros({seg.vision, cfg.vision_dim});
  in.audio = Tensor<float>::zeros({seg.audio, cfg.audio_dim});
  FlopCounter counter;
  if (fusion_only) {
    const auto x = model.encode(ctx, in);
    ScopedFlopCounter scope(counter);
    if (model.gsit) {
      model.gsit->forward(ctx, x, seg, cfg.structure, cfg.fusion_modalities);
    } else {
      model.mult->forward(ctx, x, seg);
    }
  } else {
    ScopedFlopCounter scope(counter);
    model.forward(ctx, in);
  }
  return counter;
}

std::string CostReport::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["seg"] = {{"t", seg.text}, {"v", seg.vision}, {"a", seg.audio}};
  j["params"] = params.total;
  j["params_by_module"] = params.by_module;
  j["fusion_params"] = fusion_params;
  j["flops"] = flops.total();
  j["flops_by_term"] = flops.terms;
  j["fusion_flops"] = fusion_flops;
  j["transformer_stacks"] = transformer_stacks;
  j["flop_convention"] = kFlopConvention;
  return j.dump(2);
}

}  // namespace gsifn
