// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gsifn/nn/layers.hpp"

namespace gsifn {

enum class ForgetActivation { sigmoid, exp };
enum class MlstmMode { parallel, recurrent };

struct MlstmConfig {
  std::size_t input_dim = 128;
  /// Memory width d; the block residual requires d == input_dim.
  std::size_t hidden_dim = 128;
  std::size_t num_blocks = 4;
  ForgetActivation forget = ForgetActivation::sigmoid;
  /// Log-space stabilisation. Off reproduces the bare exp gates and the
  /// max{|n.q|, 1} floor, which overflow for large pre-activations.
  bool stabilized = true;
  MlstmMode mode = MlstmMode::parallel;

  void validate() const;
};

struct MlstmParams {
  nn::Linear q, k, v, o;
  /// Scalar gate pre-activations: d_in -> 1.
  nn::Linear i_gate, f_gate;
  std::size_t dim = 0;

  template <class T>
  static MlstmParams create(ParamSet<T>& ps, const std::string& name, ParamGroup g, std::size_t in,
                            std::size_t dim, Rng& rng);
};

/// Recurrent state. C: d x d (rows follow v, columns follow k), n: 1 x d,
/// m: 1 x 1 running log-scale. C and n are stored divided by exp(m).
template <class T>
struct MlstmState {
  Tensor<T> C;
  Tensor<T> n;
  Tensor<T> m;

  static MlstmState zeros(std::size_t d) {
    return {Tensor<T>::zeros({d, d}), Tensor<T>::zeros({1, d}), Tensor<T>::zeros({1, 1})};
  }
};

template <class T>
struct MlstmStepResult {
  Tensor<T> h;  // 1 x d
  MlstmState<T> state;
};

/// One recurrence step for a 1 x d_in input row.
template <class T>
MlstmStepResult<T> mlstm_step(const Context<T>& ctx, const MlstmParams& p, const Tensor<T>& x,
                              const MlstmState<T>& state, const MlstmConfig& cfg);

/// h_1..h_T from a zero state, T x d. Mode picks the step loop or the
/// equivalent all-pairs (parallel) evaluation.
template <class T>
Tensor<T> mlstm_forward(const Context<T>& ctx, const MlstmParams& p, const Tensor<T>& x, const MlstmConfig& cfg);

/// Stack of num_blocks blocks, each X + mLSTM(LN(X)).
struct MlstmStack {
  MlstmConfig cfg;
  std::vector<nn::LayerNorm> norms;
  std::vector<MlstmParams> cells;

  template <class T>
  static MlstmStack create(ParamSet<T>& ps, const std::string& name, ParamGroup g, const MlstmConfig& cfg, Rng& rng);

  template <class T>
  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) const;
};

}  // namespace gsifn
