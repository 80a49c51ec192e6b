// SPDX-License-Identifier: Apache-2.0
// Plain-loop reference implementations used as oracles. Nothing here touches
// the tensor ops or the tape: values are read out of a ParamSet by name and
// every product is spelled out.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "gsifn/masking.hpp"
#include "gsifn/nn/layers.hpp"
#include "gsifn/nn/params.hpp"

namespace gsifn::reference {

using Mat = std::vector<std::vector<double>>;

inline Mat from_tensor(const Tensor<double>& t) {
  const std::size_t r = t.rank() == 2 ? t.rows() : 1, c = t.size() / r;
  Mat m(r, std::vector<double>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i][j] = t[i * c + j];
  return m;
}

inline Tensor<double> to_tensor(const Mat& m) {
  std::vector<double> v;
  for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
  return Tensor<double>({m.size(), m[0].size()}, v);
}

inline Mat param(const ParamSet<double>& ps, const std::string& name) { return from_tensor(ps[ps.id_of(name)].value); }

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t p = 0; p < b.size(); ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline Mat linear(const ParamSet<double>& ps, const std::string& name, const Mat& x) {
  auto y = matmul(x, param(ps, name + ".w"));
  const auto b = param(ps, name + ".b");
  for (auto& row : y)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[0][j];
  return y;
}

inline Mat layer_norm(const ParamSet<double>& ps, const std::string& name, const Mat& x, double eps = 1e-5) {
  const auto g = param(ps, name + ".gamma"), b = param(ps, name + ".beta");
  Mat y = x;
  for (auto& row : y) {
    double mu = 0, var = 0;
    for (double v : row) mu += v;
    mu /= row.size();
    for (double v : row) var += (v - mu) * (v - mu);
    var /= row.size();
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mu) / std::sqrt(var + eps) * g[0][j] + b[0][j];
  }
  return y;
}

inline Mat add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline Mat hconcat(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i) c[i].insert(c[i].end(), b[i].begin(), b[i].end());
  return c;
}

/// visible[i][j]: query i may attend to key j. Empty means all visible.
using Visibility = std::vector<std::vector<bool>>;

inline Visibility visibility(const std::vector<std::size_t>& lengths, const BlockPattern& p) {
  std::size_t n = 0;
  for (auto l : lengths) n += l;
  Visibility vis(n, std::vector<bool>(n, false));
  std::size_t r0 = 0;
  for (std::size_t a = 0; a < lengths.size(); ++a) {
    std::size_t c0 = 0;
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      for (std::size_t r = r0; r < r0 + lengths[a]; ++r)
        for (std::size_t c = c0; c < c0 + lengths[b]; ++c) vis[r][c] = p[a][b];
      c0 += lengths[b];
    }
    r0 += lengths[a];
  }
  return vis;
}

struct AttentionResult {
  Mat value;
  std::vector<Mat> weights;
};

/// Eval-mode multi-head attention under the parameter prefix `name`
/// (".q", ".k", ".v", ".o" linears).
inline AttentionResult attention(const ParamSet<double>& ps, const std::string& name, const Mat& target,
                                 const Mat& source, const Visibility& vis, std::size_t heads, std::size_t hd) {
  const auto Q = linear(ps, name + ".q", target), K = linear(ps, name + ".k", source),
             V = linear(ps, name + ".v", source);
  const std::size_t tq = target.size(), ts = source.size();
  Mat joined(tq, std::vector<double>(heads * hd, 0.0));
  AttentionResult out;
  for (std::size_t h = 0; h < heads; ++h) {
    Mat w(tq, std::vector<double>(ts, 0.0));
    for (std::size_t i = 0; i < tq; ++i) {
      double mx = -1e300;
      std::vector<double> s(ts, 0.0);
      for (std::size_t j = 0; j < ts; ++j) {
        if (!vis.empty() && !vis[i][j]) continue;
        for (std::size_t c = 0; c < hd; ++c) s[j] += Q[i][h * hd + c] * K[j][h * hd + c];
        s[j] /= std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < ts; ++j)
        if (vis.empty() || vis[i][j]) z += (w[i][j] = std::exp(s[j] - mx));
      for (std::size_t j = 0; j < ts; ++j) w[i][j] /= z;
      for (std::size_t c = 0; c < hd; ++c)
        for (std::size_t j = 0; j < ts; ++j) joined[i][h * hd + c] += w[i][j] * V[j][h * hd + c];
    }
    out.weights.push_back(w);
  }
  out.value = linear(ps, name + ".o", joined);
  return out;
}

/// Eval-mode pre-norm transformer stack `name` (layers l0, l1, ...).
inline Mat transformer(const ParamSet<double>& ps, const std::string& name, const nn::TransformerConfig& cfg,
                       const Mat& x, const Visibility& vis, const Mat* source = nullptr) {
  Mat h = x;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = name + ".l" + std::to_string(l);
    const auto hn = layer_norm(ps, p + ".ln_attn", h);
    const auto sn = source ? layer_norm(ps, p + ".ln_attn", *source) : hn;
    h = add(h, attention(ps, p + ".attn", hn, sn, vis, cfg.heads, cfg.resolved_head_dim()).value);
    if (cfg.ffn_mult > 0) {
      auto f = linear(ps, p + ".ffn_in", layer_norm(ps, p + ".ln_ffn", h));
      for (auto& row : f)
        for (auto& v : row) v = std::max(v, 0.0);
      h = add(h, linear(ps, p + ".ffn_out", f));
    }
  }
  return h;
}

/// Eval-mode GsiT over the three (possibly padded) sequences; returns the
/// 1 x 6d decomposed fusion vector.
inline Mat gsit(const ParamSet<double>& ps, const std::string& name, const nn::TransformerConfig& cfg,
                const std::array<Mat, 3>& x, const std::array<std::size_t, 3>& valid, StructureId structure) {
  Mat v;
  std::vector<std::size_t> lengths;
  for (const auto& m : x) {
    v.insert(v.end(), m.begin(), m.end());
    lengths.push_back(m.size());
  }
  const auto fwd = transformer(ps, name + ".forward", cfg, v,
                               visibility(lengths, structure_pattern(structure, RingDirection::forward)));
  const auto bwd = transformer(ps, name + ".backward", cfg, v,
                               visibility(lengths, structure_pattern(structure, RingDirection::backward)));
  auto wide = cfg;
  wide.d_model *= 2;
  wide.head_dim *= 2;
  const auto enh = transformer(ps, name + ".enhance", wide, hconcat(fwd, bwd),
                               visibility(lengths, interlaced_pattern(MaskMode::intra, RingDirection::forward)));
  Mat out(1);
  std::size_t offset = 0;
  for (std::size_t u = 0; u < 3; ++u) {
    const auto& row = enh[offset + valid[u] - 1];
    out[0].insert(out[0].end(), row.begin(), row.end());
    offset += lengths[u];
  }
  return out;
}

inline double max_rel_error(const Mat& a, const Mat& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      worst = std::max(worst, std::abs(a[i][j] - b[i][j]) / std::max(1e-12, std::abs(b[i][j])));
  return worst;
}

inline double max_abs_error(const Mat& a, const Mat& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  return worst;
}

}  // namespace gsifn::reference
