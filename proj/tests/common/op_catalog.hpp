// SPDX-License-Identifier: Apache-2.0
// Every differentiable op with a small input shape, checked against central
// differences of a randomly weighted sum of its output.
#pragma once

#include <functional>
#include <vector>

#include "testing.hpp"

namespace gsifn::testing {

using TD = Tensor<double>;
using Inputs = std::vector<TD>;

struct GradCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<TD(const Inputs&)> fn;
  double input_scale = 1.0;
  double shift = 0.0;  // added to every input (keeps log/div away from 0)
};

inline TD weighted_sum(const TD& y, Rng& rng) {
  // Random fixed weights so every output entry gets a distinct gradient.
  auto w = random_tensor(y.shape(), rng);
  return ops::sum(ops::mul(y, w));
}

/// Worst relative gradient error for one catalog entry.
inline double case_error(const GradCase& c, std::uint64_t seed = 42) {
  Rng rng(seed);
  Inputs in;
  for (const auto& s : c.shapes) {
    auto t = random_tensor(s, rng, c.input_scale);
    if (c.shift != 0.0)
      for (auto& v : t.mutable_values()) v = std::abs(v) + c.shift;
    in.push_back(t);
  }
  auto f = [&](const Inputs& x) {
    Rng wr(seed ^ 0x5bd1e995u);
    return weighted_sum(c.fn(x), wr);
  };
  return gradient_error(f, in);
}

inline const TD& catalog_mask() {
  static const TD mask = [] {
    std::vector<double> m(4 * 5, 0.0);
    m[1] = m[7] = m[8] = m[19] = ops::kMaskedLogit;
    return TD({4, 5}, m);
  }();
  return mask;
}

inline std::vector<GradCase> op_catalog() {
  return {
      GradCase{"matmul", {{3, 4}, {4, 5}}, [](const Inputs& x) { return ops::matmul(x[0], x[1]); }},
      GradCase{"matmul_chain", {{4, 4}, {4, 4}, {4, 4}},
               [](const Inputs& x) { return ops::matmul(ops::matmul(x[0], x[1]), x[2]); }},
      GradCase{"transpose", {{3, 5}}, [](const Inputs& x) { return ops::transpose(x[0]); }},
      GradCase{"reshape", {{3, 4}}, [](const Inputs& x) { return ops::reshape(x[0], {2, 6}); }},
      GradCase{"add", {{3, 4}, {3, 4}}, [](const Inputs& x) { return ops::add(x[0], x[1]); }},
      GradCase{"sub", {{3, 4}, {3, 4}}, [](const Inputs& x) { return ops::sub(x[0], x[1]); }},
      GradCase{"mul", {{3, 4}, {3, 4}}, [](const Inputs& x) { return ops::mul(x[0], x[1]); }},
      GradCase{"div", {{3, 4}, {3, 4}}, [](const Inputs& x) { return ops::div(x[0], x[1]); }, 1.0, 0.5},
      GradCase{"maximum", {{3, 4}, {3, 4}}, [](const Inputs& x) { return ops::maximum(x[0], x[1]); }},
      GradCase{"scale", {{3, 4}}, [](const Inputs& x) { return ops::scale(x[0], 2.5); }},
      GradCase{"add_scalar", {{3, 4}}, [](const Inputs& x) { return ops::add_scalar(x[0], -1.5); }},
      GradCase{"exp", {{3, 4}}, [](const Inputs& x) { return ops::exp(x[0]); }},
      GradCase{"log", {{3, 4}}, [](const Inputs& x) { return ops::log(x[0]); }, 1.0, 0.3},
      GradCase{"tanh", {{3, 4}}, [](const Inputs& x) { return ops::tanh(x[0]); }},
      GradCase{"sigmoid", {{3, 4}}, [](const Inputs& x) { return ops::sigmoid(x[0]); }},
      GradCase{"log_sigmoid", {{3, 4}}, [](const Inputs& x) { return ops::log_sigmoid(x[0]); }, 3.0},
      GradCase{"relu", {{3, 4}}, [](const Inputs& x) { return ops::relu(x[0]); }},
      GradCase{"abs", {{3, 4}}, [](const Inputs& x) { return ops::abs(x[0]); }},
      GradCase{"sum", {{3, 4}}, [](const Inputs& x) { return ops::sum(x[0]); }},
      GradCase{"mean", {{3, 4}}, [](const Inputs& x) { return ops::mean(x[0]); }},
      GradCase{"row_sum", {{3, 4}}, [](const Inputs& x) { return ops::row_sum(x[0]); }},
      GradCase{"row_max", {{3, 4}}, [](const Inputs& x) { return ops::row_max(x[0]); }},
      GradCase{"col_mean", {{3, 4}}, [](const Inputs& x) { return ops::col_mean(x[0]); }},
      GradCase{"cumsum_rows", {{4, 3}}, [](const Inputs& x) { return ops::cumsum_rows(x[0]); }},
      GradCase{"add_row", {{3, 4}, {1, 4}}, [](const Inputs& x) { return ops::add_row(x[0], x[1]); }},
      GradCase{"mul_row", {{3, 4}, {1, 4}}, [](const Inputs& x) { return ops::mul_row(x[0], x[1]); }},
      GradCase{"add_col", {{3, 4}, {3, 1}}, [](const Inputs& x) { return ops::add_col(x[0], x[1]); }},
      GradCase{"sub_col", {{3, 4}, {3, 1}}, [](const Inputs& x) { return ops::sub_col(x[0], x[1]); }},
      GradCase{"mul_col", {{3, 4}, {3, 1}}, [](const Inputs& x) { return ops::mul_col(x[0], x[1]); }},
      GradCase{"div_col", {{3, 4}, {3, 1}}, [](const Inputs& x) { return ops::div_col(x[0], x[1]); }, 1.0, 0.5},
      GradCase{"outer_sum", {{3, 1}, {1, 4}}, [](const Inputs& x) { return ops::outer_sum(x[0], x[1]); }},
      GradCase{"concat0", {{2, 3}, {4, 3}}, [](const Inputs& x) { return ops::concat<double>({x[0], x[1]}, 0); }},
      GradCase{"concat1", {{3, 2}, {3, 4}}, [](const Inputs& x) { return ops::concat<double>({x[0], x[1]}, 1); }},
      GradCase{"slice", {{5, 4}}, [](const Inputs& x) { return ops::slice(x[0], 0, 1, 3); }},
      GradCase{"split", {{3, 6}},
               [](const Inputs& x) {
                 auto p = ops::split(x[0], 1, {1, 2, 3});
                 return ops::add(ops::scale(p[1], 2.0), ops::slice(p[2], 1, 0, 2));
               }},
      GradCase{"softmax", {{4, 5}}, [](const Inputs& x) { return ops::softmax(x[0]); }},
      GradCase{"softmax_masked", {{4, 5}}, [](const Inputs& x) { return ops::softmax(x[0], &catalog_mask()); }},
      GradCase{"layer_norm", {{3, 6}, {1, 6}, {1, 6}},
               [](const Inputs& x) { return ops::layer_norm(x[0], x[1], x[2]); }},
      GradCase{"conv1d_k1", {{5, 3}, {1, 3, 2}, {1, 2}},
               [](const Inputs& x) { return ops::conv1d(x[0], x[1], x[2]); }},
      GradCase{"conv1d_k3", {{5, 3}, {3, 3, 2}, {1, 2}},
               [](const Inputs& x) { return ops::conv1d(x[0], x[1], x[2]); }},
      GradCase{"embedding", {{6, 3}}, [](const Inputs& x) { return ops::embedding(x[0], {4, 1, 4, 0}); }},
  };
}

}  // namespace gsifn::testing
