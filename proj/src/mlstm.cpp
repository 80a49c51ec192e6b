// SPDX-License-Identifier: Apache-2.0
#include "gsifn/mlstm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gsifn {

void MlstmConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("mlstm dims must be positive");
  if (num_blocks > 0 && input_dim != hidden_dim) {
    throw ConfigError("mlstm block residual needs input_dim == hidden_dim");
  }
}

template <class T>
MlstmParams MlstmParams::create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t in,
                                std::size_t dim, Rng& rng) {
  MlstmParams p;
  p.dim = dim;
  p.q = nn::Linear::create(ps, name + ".q", g, in, dim, rng);
  p.k = nn::Linear::create(ps, name + ".k", g, in, dim, rng);
  p.v = nn::Linear::create(ps, name + ".v", g, in, dim, rng);
  p.o = nn::Linear::create(ps, name + ".o", g, in, dim, rng);
  p.i_gate = nn::Linear::create(ps, name + ".i", g, in, 1, rng);
  p.f_gate = nn::Linear::create(ps, name + ".f", g, in, 1, rng);
  return p;
}

namespace {

template <class T>
struct Projections {
  Tensor<T> q, k, v, o, i_pre, log_f;
};

// k carries the 1/sqrt(d) factor on the weight product only; the bias is added after.
template <class T>
Projections<T> project(const Context<T>& ctx, const MlstmParams& p, const Tensor<T>& x, const MlstmConfig& cfg) {
  Projections<T> r;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(p.dim));
  r.q = p.q(ctx, x);
  r.k = ops::add_row(ops::scale(ops::matmul(x, ctx[p.k.w]), inv_sqrt), ctx[p.k.b]);
  r.v = p.v(ctx, x);
  r.o = ops::sigmoid(p.o(ctx, x));
  r.i_pre = p.i_gate(ctx, x);
  const auto f_pre = p.f_gate(ctx, x);
  r.log_f = cfg.forget == ForgetActivation::sigmoid ? ops::log_sigmoid(f_pre) : f_pre;
  return r;
}

// exp(-m) saturates to the largest finite value; past that point the readout
// is below the precision of T anyway.
template <class T>
T stabilised_floor(T m) {
  return std::min(std::exp(-m), std::numeric_limits<T>::max());
}

template <class T>
[[noreturn]] void overflow(const NumericError& e) {
  throw Error("mlstm.overflow", std::string("mLSTM overflow: ") + e.what());
}

template <class T>
Tensor<T> untracked(std::vector<T> v, Shape shape) {
  return Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace

template <class T>
MlstmStepResult<T> mlstm_step(const Context<T>& ctx, const MlstmParams& p, const Tensor<T>& x,
                              const MlstmState<T>& s, const MlstmConfig& cfg) {
  if (x.rank() != 2 || x.rows() != 1) throw ShapeError("mlstm_step expects a 1 x d_in row, got " + shape_str(x.shape()));
  try {
    const std::size_t d = p.dim;
    const auto pr = project(ctx, p, x, cfg);
    Tensor<T> i_gate, f_gate, m_new, floor;
    if (cfg.stabilized) {
      // m_t = max(log f_t + m_{t-1}, i~_t). Output is invariant to m, so it is
      // treated as a constant for differentiation.
      const T mv = std::max(pr.log_f.item() + s.m.item(), pr.i_pre.item());
      m_new = Tensor<T>::full({1, 1}, mv);
      i_gate = ops::exp(ops::add_scalar(pr.i_pre, -mv));
      f_gate = ops::exp(ops::add(pr.log_f, ops::add_scalar(s.m, -mv)));
      floor = Tensor<T>::full({1, 1}, stabilised_floor(mv));
    } else {
      m_new = Tensor<T>::zeros({1, 1});
      i_gate = ops::exp(pr.i_pre);
      f_gate = ops::exp(pr.log_f);
      floor = Tensor<T>::full({1, 1}, T(1));
    }
    const auto ones = Tensor<T>::full({d, 1}, T(1));
    // Scalar x matrix products spelled as rank-1 matmuls.
    const auto f_col = ops::matmul(ones, f_gate);
    const auto i_col = ops::matmul(ones, i_gate);
    const auto vk = ops::matmul(ops::transpose(pr.v), pr.k);
    const auto C = ops::add(ops::mul_col(s.C, f_col), ops::mul_col(vk, i_col));
    const auto n = ops::add(ops::matmul(f_gate, s.n), ops::matmul(i_gate, pr.k));
    const auto Cq = ops::transpose(ops::matmul(C, ops::transpose(pr.q)));
    const auto nq = ops::matmul(n, ops::transpose(pr.q));
    const auto denom = ops::maximum(ops::abs(nq), floor);
    const auto h = ops::mul(pr.o, ops::div_col(Cq, denom));
    return {h, {C, n, m_new}};
  } catch (const NumericError& e) {
    overflow<T>(e);
  }
}

namespace {

template <class T>
Tensor<T> forward_recurrent(const Context<T>& ctx, const MlstmParams& p, const Tensor<T>& x, const MlstmConfig& cfg) {
  auto state = MlstmState<T>::zeros(p.dim);
  std::vector<Tensor<T>> hs;
  hs.reserve(x.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto r = mlstm_step(ctx, p, ops::slice(x, 0, t, 1), state, cfg);
    hs.push_back(r.h);
    state = std::move(r.state);
  }
  return ops::concat(hs, 0);
}

// All-pairs form: h~_t = sum_s D_ts (q_t.k_s) v_s / max(|sum_s D_ts q_t.k_s|, 1)
// with D_ts = exp(F_t - F_s + i~_s) for s <= t, F the cumulative log forget.
// Stabilised by the row maximum of the exponent.
template <class T>
Tensor<T> forward_parallel(const Context<T>& ctx, const MlstmParams& p, const Tensor<T>& x, const MlstmConfig& cfg) {
  const std::size_t len = x.rows();
  const auto pr = project(ctx, p, x, cfg);
  const auto F = ops::cumsum_rows(pr.log_f);  // T x 1
  const auto logD = ops::outer_sum(F, ops::transpose(ops::sub(pr.i_pre, F)));
  std::vector<T> causal(len * len, T(0));
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t s = t + 1; s < len; ++s) causal[t * len + s] = static_cast<T>(ops::kMaskedLogit);
  const auto logD_masked = ops::add(logD, untracked<T>(std::move(causal), {len, len}));

  std::vector<T> mrow(len, T(0)), floor(len, T(1));
  if (cfg.stabilized) {
    for (std::size_t t = 0; t < len; ++t) {
      T best = logD.at(t, 0);
      for (std::size_t s = 1; s <= t; ++s) best = std::max(best, logD.at(t, s));
      mrow[t] = best;
      floor[t] = stabilised_floor(best);
    }
  }
  const auto D = ops::exp(ops::sub_col(logD_masked, untracked<T>(std::move(mrow), {len, 1})));
  const auto S = ops::mul(ops::matmul(pr.q, ops::transpose(pr.k)), D);
  const auto denom = ops::maximum(ops::abs(ops::row_sum(S)), untracked<T>(std::move(floor), {len, 1}));
  return ops::mul(pr.o, ops::div_col(ops::matmul(S, pr.v), denom));
}

}  // namespace

template <class T>
Tensor<T> mlstm_forward(const Context<T>& ctx, const MlstmParams& p, const Tensor<T>& x, const MlstmConfig& cfg) {
  if (x.rank() != 2 || x.rows() == 0) throw ShapeError("mlstm_forward expects a T x d_in sequence");
  if (cfg.mode == MlstmMode::recurrent) return forward_recurrent(ctx, p, x, cfg);
  try {
    return forward_parallel(ctx, p, x, cfg);
  } catch (const NumericError& e) {
    overflow<T>(e);
  }
}

template <class T>
MlstmStack MlstmStack::create(ParamSet<T>& ps, const std::string& name, ParamGroup g, const MlstmConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  MlstmStack s;
  s.cfg = cfg;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    const std::string bn = name + ".b" + std::to_string(b);
    s.norms.push_back(nn::LayerNorm::create(ps, bn + ".ln", g, cfg.input_dim));
    s.cells.push_back(MlstmParams::create(ps, bn + ".cell", g, cfg.input_dim, cfg.hidden_dim, rng));
  }
  return s;
}

template <class T>
Tensor<T> MlstmStack::forward(const Context<T>& ctx, const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (std::size_t b = 0; b < cells.size(); ++b) {
    h = ops::add(h, mlstm_forward(ctx, cells[b], norms[b](ctx, h), cfg));
  }
  return h;
}

#define GSIFN_INSTANTIATE_MLSTM(T)                                                                                \
  template MlstmParams MlstmParams::create<T>(ParamSet<T>&, const std::string&, ParamGroup, std::size_t,          \
                                              std::size_t, Rng&);                                                 \
  template MlstmStepResult<T> mlstm_step(const Context<T>&, const MlstmParams&, const Tensor<T>&,                 \
                                         const MlstmState<T>&, const MlstmConfig&);                               \
  template Tensor<T> mlstm_forward(const Context<T>&, const MlstmParams&, const Tensor<T>&, const MlstmConfig&);  \
  template MlstmStack MlstmStack::create<T>(ParamSet<T>&, const std::string&, ParamGroup, const MlstmConfig&,     \
                                            Rng&);                                                                \
  template Tensor<T> MlstmStack::forward<T>(const Context<T>&, const Tensor<T>&) const;

GSIFN_INSTANTIATE_MLSTM(float)
GSIFN_INSTANTIATE_MLSTM(double)

}  // namespace gsifn
