// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "gsifn/core/rng.hpp"
#include "gsifn/core/tensor.hpp"

// Differentiable tensor operations. Every op records onto the tape of its
// tracked inputs (if any) and throws NumericError when it produces a
// non-finite value. There is no implicit broadcasting: the row/column
// variants (add_row, mul_col, ...) spell out every shape alignment.
//
// All matrix ops work on rank-2 tensors. Reductions return shape {1}.
namespace gsifn::ops {

/// Additive value standing in for -inf in attention masks.
inline constexpr double kMaskedLogit = -1e9;

inline bool is_masked(double mask_value) { return mask_value <= kMaskedLogit / 2; }

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> transpose(const Tensor<T>& a);
template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// Elementwise, identical shapes.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T s);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

template <class T> Tensor<T> exp(const Tensor<T>& a);
template <class T> Tensor<T> log(const Tensor<T>& a);
template <class T> Tensor<T> tanh(const Tensor<T>& a);
template <class T> Tensor<T> sigmoid(const Tensor<T>& a);
/// log(sigmoid(x)) without overflow.
template <class T> Tensor<T> log_sigmoid(const Tensor<T>& a);
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> abs(const Tensor<T>& a);

template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
/// m x n -> m x 1
template <class T> Tensor<T> row_sum(const Tensor<T>& a);
/// m x n -> m x 1 (gradient routed to the first maximal entry)
template <class T> Tensor<T> row_max(const Tensor<T>& a);
/// m x n -> 1 x n
template <class T> Tensor<T> col_mean(const Tensor<T>& a);
/// Running sum down the rows: y[i] = x[0] + ... + x[i].
template <class T> Tensor<T> cumsum_rows(const Tensor<T>& a);

// Explicit row/column broadcasts. `r` is 1 x n, `c` is m x 1.
template <class T> Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& r);
template <class T> Tensor<T> mul_row(const Tensor<T>& x, const Tensor<T>& r);
template <class T> Tensor<T> add_col(const Tensor<T>& x, const Tensor<T>& c);
template <class T> Tensor<T> sub_col(const Tensor<T>& x, const Tensor<T>& c);
template <class T> Tensor<T> mul_col(const Tensor<T>& x, const Tensor<T>& c);
template <class T> Tensor<T> div_col(const Tensor<T>& x, const Tensor<T>& c);
/// y[i][j] = c[i] + r[j]
template <class T> Tensor<T> outer_sum(const Tensor<T>& c, const Tensor<T>& r);

/// axis 0 stacks rows, axis 1 joins columns.
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <class T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t len);
template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, const std::vector<std::size_t>& lengths);

/// Row-wise softmax of (x + mask). Masked entries (<= kMaskedLogit / 2) are
/// excluded from normalisation and come out exactly 0. A row without any
/// visible entry is an error. `mask` must be untracked and match x's shape.
template <class T> Tensor<T> softmax(const Tensor<T>& x, const Tensor<T>* mask = nullptr);

/// Normalises each row, then applies gamma/beta (both 1 x n).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// Temporal convolution with same padding. x: T x d_in, w: {k, d_in, d_out}, b: 1 x d_out.
/// k must be odd.
template <class T> Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Inverted dropout: kept entries are divided by (1 - p). Identity when
/// `train` is false or p == 0.
template <class T> Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng);

/// Row lookup: ids.size() x d from a vocab x d table.
template <class T> Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& ids);

}  // namespace gsifn::ops
