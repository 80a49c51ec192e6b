// SPDX-License-Identifier: Apache-2.0
#include "gsifn/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gsifn/core/flops.hpp"

namespace gsifn {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace gsifn

namespace gsifn::ops {
namespace {

template <class T>
using Buf = std::shared_ptr<std::vector<T>>;

template <class T>
using Slots = std::span<std::vector<T>* const>;

void count(std::uint64_t FlopCounter::*field, std::uint64_t n) {
  if (auto* c = detail::active_flop_counter) c->*field += n;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <class T>
void require_rank2(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

template <class T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

template <class T>
Tensor<T> finish(const char* op, Shape shape, std::vector<T> values,
                 std::initializer_list<const Tensor<T>*> inputs, typename Tape<T>::GradFn fn) {
  for (const T& v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
  Tensor<T> out(std::move(shape), std::move(values));
  Tape<T>* tape = nullptr;
  for (const auto* in : inputs) {
    if (in->tracked()) {
      tape = in->tape();
      break;
    }
  }
  if (!tape) return out;
  return tape->record(std::move(out), inputs, std::move(fn));
}

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  // Transposing B first keeps the inner loop a contiguous axpy, which
  // vectorises; a dot-product inner loop would not.
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, k, n, a, bt.data(), c);
}

// C[m x n] += A[k x m]^T * B[k x n]
template <class T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = a + p * m;
    const T* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = ap[i];
      if (av == T(0)) continue;
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <class T, class F, class DF>
Tensor<T> unary(const char* op, const Tensor<T>& a, F f, DF df) {
  std::vector<T> y(a.size());
  const T* x = a.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  Buf<T> xs = a.storage();
  auto ys = std::make_shared<std::vector<T>>(y);
  return finish<T>(op, a.shape(), std::move(y), {&a}, [xs, ys, df](std::span<const T> g, Slots<T> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df((*xs)[i], (*ys)[i]);
  });
}

// Row/column broadcast helper: `v` runs along rows (per column, 1 x n) when
// `along_row`, else along columns (per row, m x 1).
enum class Axis { row, col };

template <class T>
void require_vec(const char* op, const Tensor<T>& x, const Tensor<T>& v, Axis axis) {
  require_rank2(op, x);
  require_rank2(op, v);
  const bool ok = axis == Axis::row ? (v.rows() == 1 && v.cols() == x.cols())
                                    : (v.cols() == 1 && v.rows() == x.rows());
  if (!ok) shape_fail(op, x.shape(), v.shape());
}

}  // namespace

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> c(m * n, T(0));
  gemm_nn(m, k, n, a.data(), b.data(), c.data());
  count(&FlopCounter::matmul, 2ULL * m * k * n);
  Buf<T> as = a.storage(), bs = b.storage();
  return finish<T>("matmul", {m, n}, std::move(c), {&a, &b}, [as, bs, m, k, n](std::span<const T> g, Slots<T> gin) {
    if (gin[0]) gemm_nt(m, n, k, g.data(), bs->data(), gin[0]->data());
    if (gin[1]) gemm_tn(k, m, n, as->data(), g.data(), gin[1]->data());
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = a.data()[i * n + j];
  return finish<T>("transpose", {n, m}, std::move(y), {&a}, [m, n](std::span<const T> g, Slots<T> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) shape_fail("reshape", a.shape(), shape);
  return finish<T>("reshape", std::move(shape), a.to_vector(), {&a}, [](std::span<const T> g, Slots<T> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("add", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return finish<T>("add", a.shape(), std::move(y), {&a, &b}, [](std::span<const T> g, Slots<T> gin) {
    for (auto* gx : gin)
      if (gx)
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("sub", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  return finish<T>("sub", a.shape(), std::move(y), {&a, &b}, [](std::span<const T> g, Slots<T> gin) {
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    if (gin[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("mul", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  Buf<T> as = a.storage(), bs = b.storage();
  return finish<T>("mul", a.shape(), std::move(y), {&a, &b}, [as, bs](std::span<const T> g, Slots<T> gin) {
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*bs)[i];
    if (gin[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * (*as)[i];
  });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("div", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] / b[i];
  Buf<T> as = a.storage(), bs = b.storage();
  return finish<T>("div", a.shape(), std::move(y), {&a, &b}, [as, bs](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T bi = (*bs)[i];
      if (gin[0]) (*gin[0])[i] += g[i] / bi;
      if (gin[1]) (*gin[1])[i] -= g[i] * (*as)[i] / (bi * bi);
    }
  });
}

template <class T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("maximum", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] >= b[i] ? a[i] : b[i];
  Buf<T> as = a.storage(), bs = b.storage();
  return finish<T>("maximum", a.shape(), std::move(y), {&a, &b}, [as, bs](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool first = (*as)[i] >= (*bs)[i];
      if (first && gin[0]) (*gin[0])[i] += g[i];
      if (!first && gin[1]) (*gin[1])[i] += g[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary<T>("scale", a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary<T>("add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary<T>("tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

namespace {
template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}
}  // namespace

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>("sigmoid", a, [](T x) { return stable_sigmoid(x); },
                  [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> log_sigmoid(const Tensor<T>& a) {
  return unary<T>(
      "log_sigmoid", a, [](T x) { return std::min(x, T(0)) - std::log1p(std::exp(-std::abs(x))); },
      [](T x, T) { return stable_sigmoid(-x); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary<T>("relu", a, [](T x) { return x > T(0) ? x : T(0); },
                  [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary<T>("abs", a, [](T x) { return std::abs(x); },
                  [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return finish<T>("sum", {1}, {s}, {&a}, [](std::span<const T> g, Slots<T> gin) {
    for (auto& v : *gin[0]) v += g[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  const T n = static_cast<T>(a.size());
  T s = 0;
  for (T v : a.values()) s += v;
  return finish<T>("mean", {1}, {s / n}, {&a}, [n](std::span<const T> g, Slots<T> gin) {
    for (auto& v : *gin[0]) v += g[0] / n;
  });
}

template <class T>
Tensor<T> row_sum(const Tensor<T>& a) {
  require_rank2("row_sum", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> y(m, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i] += a.data()[i * n + j];
  return finish<T>("row_sum", {m, 1}, std::move(y), {&a}, [m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*gin[0])[i * n + j] += g[i];
  });
}

template <class T>
Tensor<T> row_max(const Tensor<T>& a) {
  require_rank2("row_max", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> y(m);
  std::vector<std::size_t> arg(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* r = a.data() + i * n;
    arg[i] = static_cast<std::size_t>(std::max_element(r, r + n) - r);
    y[i] = r[arg[i]];
  }
  return finish<T>("row_max", {m, 1}, std::move(y), {&a},
                   [arg = std::move(arg), n](std::span<const T> g, Slots<T> gin) {
                     for (std::size_t i = 0; i < arg.size(); ++i) (*gin[0])[i * n + arg[i]] += g[i];
                   });
}

template <class T>
Tensor<T> col_mean(const Tensor<T>& a) {
  require_rank2("col_mean", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> y(n, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += a.data()[i * n + j];
  for (auto& v : y) v /= static_cast<T>(m);
  return finish<T>("col_mean", {1, n}, std::move(y), {&a}, [m, n](std::span<const T> g, Slots<T> gin) {
    const T inv = T(1) / static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*gin[0])[i * n + j] += g[j] * inv;
  });
}

template <class T>
Tensor<T> cumsum_rows(const Tensor<T>& a) {
  require_rank2("cumsum_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> y = a.to_vector();
  for (std::size_t i = 1; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] += y[(i - 1) * n + j];
  return finish<T>("cumsum_rows", {m, n}, std::move(y), {&a}, [m, n](std::span<const T> g, Slots<T> gin) {
    std::vector<T> acc(n, T(0));
    for (std::size_t i = m; i-- > 0;) {
      for (std::size_t j = 0; j < n; ++j) {
        acc[j] += g[i * n + j];
        (*gin[0])[i * n + j] += acc[j];
      }
    }
  });
}

template <class T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& r) {
  require_vec("add_row", x, r, Axis::row);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x.data()[i * n + j] + r[j];
  return finish<T>("add_row", {m, n}, std::move(y), {&x, &r}, [m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (gin[0]) (*gin[0])[i * n + j] += g[i * n + j];
        if (gin[1]) (*gin[1])[j] += g[i * n + j];
      }
  });
}

template <class T>
Tensor<T> mul_row(const Tensor<T>& x, const Tensor<T>& r) {
  require_vec("mul_row", x, r, Axis::row);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x.data()[i * n + j] * r[j];
  Buf<T> xs = x.storage(), rs = r.storage();
  return finish<T>("mul_row", {m, n}, std::move(y), {&x, &r}, [xs, rs, m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (gin[0]) (*gin[0])[i * n + j] += g[i * n + j] * (*rs)[j];
        if (gin[1]) (*gin[1])[j] += g[i * n + j] * (*xs)[i * n + j];
      }
  });
}

template <class T>
Tensor<T> add_col(const Tensor<T>& x, const Tensor<T>& c) {
  require_vec("add_col", x, c, Axis::col);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x.data()[i * n + j] + c[i];
  return finish<T>("add_col", {m, n}, std::move(y), {&x, &c}, [m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (gin[0]) (*gin[0])[i * n + j] += g[i * n + j];
        if (gin[1]) (*gin[1])[i] += g[i * n + j];
      }
  });
}

template <class T>
Tensor<T> sub_col(const Tensor<T>& x, const Tensor<T>& c) {
  require_vec("sub_col", x, c, Axis::col);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x.data()[i * n + j] - c[i];
  return finish<T>("sub_col", {m, n}, std::move(y), {&x, &c}, [m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (gin[0]) (*gin[0])[i * n + j] += g[i * n + j];
        if (gin[1]) (*gin[1])[i] -= g[i * n + j];
      }
  });
}

template <class T>
Tensor<T> mul_col(const Tensor<T>& x, const Tensor<T>& c) {
  require_vec("mul_col", x, c, Axis::col);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x.data()[i * n + j] * c[i];
  Buf<T> xs = x.storage(), cs = c.storage();
  return finish<T>("mul_col", {m, n}, std::move(y), {&x, &c}, [xs, cs, m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (gin[0]) (*gin[0])[i * n + j] += g[i * n + j] * (*cs)[i];
        if (gin[1]) (*gin[1])[i] += g[i * n + j] * (*xs)[i * n + j];
      }
  });
}

template <class T>
Tensor<T> div_col(const Tensor<T>& x, const Tensor<T>& c) {
  require_vec("div_col", x, c, Axis::col);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x.data()[i * n + j] / c[i];
  Buf<T> xs = x.storage(), cs = c.storage();
  return finish<T>("div_col", {m, n}, std::move(y), {&x, &c}, [xs, cs, m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i) {
      const T ci = (*cs)[i];
      for (std::size_t j = 0; j < n; ++j) {
        if (gin[0]) (*gin[0])[i * n + j] += g[i * n + j] / ci;
        if (gin[1]) (*gin[1])[i] -= g[i * n + j] * (*xs)[i * n + j] / (ci * ci);
      }
    }
  });
}

template <class T>
Tensor<T> outer_sum(const Tensor<T>& c, const Tensor<T>& r) {
  require_rank2("outer_sum", c);
  require_rank2("outer_sum", r);
  if (c.cols() != 1 || r.rows() != 1) shape_fail("outer_sum", c.shape(), r.shape());
  const std::size_t m = c.rows(), n = r.cols();
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = c[i] + r[j];
  return finish<T>("outer_sum", {m, n}, std::move(y), {&c, &r}, [m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (gin[0]) (*gin[0])[i] += g[i * n + j];
        if (gin[1]) (*gin[1])[j] += g[i * n + j];
      }
  });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank2("concat", p);
  const std::size_t other = 1 - axis;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != parts[0].dim(other)) shape_fail("concat", parts[0].shape(), p.shape());
    total += p.dim(axis);
  }
  const std::size_t m = axis == 0 ? total : parts[0].rows();
  const std::size_t n = axis == 0 ? parts[0].cols() : total;
  std::vector<T> y(m * n);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) {
        const std::size_t r = axis == 0 ? off + i : i;
        const std::size_t c = axis == 0 ? j : off + j;
        y[r * n + c] = p.at(i, j);
      }
    off += p.dim(axis);
  }
  for (const auto& v : y)
    if (!std::isfinite(v)) throw NumericError("concat: non-finite value in output");
  Tensor<T> out({m, n}, std::move(y));
  Tape<T>* tape = nullptr;
  std::vector<const Tensor<T>*> ins;
  std::vector<Shape> shapes;
  for (const auto& p : parts) {
    ins.push_back(&p);
    shapes.push_back(p.shape());
    if (p.tracked()) tape = p.tape();
  }
  if (!tape) return out;
  return tape->record(std::move(out), ins,
                      [shapes = std::move(shapes), offsets = std::move(offsets), axis, n](std::span<const T> g, Slots<T> gin) {
                        for (std::size_t k = 0; k < shapes.size(); ++k) {
                          if (!gin[k]) continue;
                          const std::size_t pr = shapes[k][0], pc = shapes[k][1];
                          for (std::size_t i = 0; i < pr; ++i)
                            for (std::size_t j = 0; j < pc; ++j) {
                              const std::size_t r = axis == 0 ? offsets[k] + i : i;
                              const std::size_t c = axis == 0 ? j : offsets[k] + j;
                              (*gin[k])[i * pc + j] += g[r * n + c];
                            }
                        }
                      });
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t len) {
  require_rank2("slice", a);
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  if (len == 0 || begin + len > a.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                     ") out of bounds for " + shape_str(a.shape()));
  }
  const std::size_t n = a.cols();
  const std::size_t m_out = axis == 0 ? len : a.rows();
  const std::size_t n_out = axis == 0 ? n : len;
  std::vector<T> y(m_out * n_out);
  for (std::size_t i = 0; i < m_out; ++i)
    for (std::size_t j = 0; j < n_out; ++j) {
      const std::size_t r = axis == 0 ? begin + i : i;
      const std::size_t c = axis == 0 ? j : begin + j;
      y[i * n_out + j] = a.data()[r * n + c];
    }
  return finish<T>("slice", {m_out, n_out}, std::move(y), {&a},
                   [axis, begin, n, m_out, n_out](std::span<const T> g, Slots<T> gin) {
                     for (std::size_t i = 0; i < m_out; ++i)
                       for (std::size_t j = 0; j < n_out; ++j) {
                         const std::size_t r = axis == 0 ? begin + i : i;
                         const std::size_t c = axis == 0 ? j : begin + j;
                         (*gin[0])[r * n + c] += g[i * n_out + j];
                       }
                   });
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, const std::vector<std::size_t>& lengths) {
  require_rank2("split", a);
  std::size_t total = 0;
  for (auto l : lengths) total += l;
  if (axis > 1 || total != a.dim(axis)) {
    throw ShapeError("split: lengths sum to " + std::to_string(total) + " but " + shape_str(a.shape()) +
                     " has " + (axis > 1 ? std::string("no such axis") : std::to_string(a.dim(axis))));
  }
  std::vector<Tensor<T>> out;
  std::size_t off = 0;
  for (auto l : lengths) {
    out.push_back(slice(a, axis, off, l));
    off += l;
  }
  return out;
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, const Tensor<T>* mask) {
  require_rank2("softmax", x);
  if (mask) {
    require_same("softmax", x, *mask);
    if (mask->tracked()) throw Error("softmax", "softmax: mask must not be tracked");
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(m * n, T(0));
  std::vector<std::size_t> visible;
  for (std::size_t i = 0; i < m; ++i) {
    visible.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || !is_masked(static_cast<double>(mask->data()[i * n + j]))) visible.push_back(j);
    if (visible.empty()) throw Error("softmax", "fully-masked row " + std::to_string(i));
    const T* xi = x.data() + i * n;
    auto logit = [&](std::size_t j) { return mask ? xi[j] + mask->data()[i * n + j] : xi[j]; };
    T mx = logit(visible[0]);
    for (auto j : visible) mx = std::max(mx, logit(j));
    T s = 0;
    for (auto j : visible) {
      y[i * n + j] = std::exp(logit(j) - mx);
      s += y[i * n + j];
    }
    for (auto j : visible) y[i * n + j] /= s;
  }
  count(&FlopCounter::softmax, kFlopsPerSoftmaxElement * m * n);
  auto ys = std::make_shared<std::vector<T>>(y);
  return finish<T>("softmax", {m, n}, std::move(y), {&x}, [ys, m, n](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* yi = ys->data() + i * n;
      const T* gi = g.data() + i * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += yi[j] * gi[j];
      for (std::size_t j = 0; j < n; ++j) (*gin[0])[i * n + j] += yi[j] * (gi[j] - dot);
    }
  });
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_vec("layer_norm", x, gamma, Axis::row);
  require_vec("layer_norm", x, beta, Axis::row);
  const std::size_t m = x.rows(), n = x.cols();
  auto xhat = std::make_shared<std::vector<T>>(m * n);
  auto inv_std = std::make_shared<std::vector<T>>(m);
  std::vector<T> y(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const T* xi = x.data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (xi[j] - mu) * is;
      (*xhat)[i * n + j] = h;
      y[i * n + j] = h * gamma[j] + beta[j];
    }
  }
  count(&FlopCounter::norm, kFlopsPerNormElement * m * n);
  Buf<T> gs = gamma.storage();
  return finish<T>("layer_norm", {m, n}, std::move(y), {&x, &gamma, &beta},
                   [xhat, inv_std, gs, m, n](std::span<const T> g, Slots<T> gin) {
                     std::vector<T> dh(n);
                     for (std::size_t i = 0; i < m; ++i) {
                       const T* gi = g.data() + i * n;
                       const T* hi = xhat->data() + i * n;
                       T s1 = 0, s2 = 0;
                       for (std::size_t j = 0; j < n; ++j) {
                         dh[j] = gi[j] * (*gs)[j];
                         s1 += dh[j];
                         s2 += dh[j] * hi[j];
                         if (gin[1]) (*gin[1])[j] += gi[j] * hi[j];
                         if (gin[2]) (*gin[2])[j] += gi[j];
                       }
                       if (!gin[0]) continue;
                       const T k = (*inv_std)[i] / static_cast<T>(n);
                       for (std::size_t j = 0; j < n; ++j)
                         (*gin[0])[i * n + j] += k * (static_cast<T>(n) * dh[j] - s1 - hi[j] * s2);
                     }
                   });
}

template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank2("conv1d", x);
  if (w.rank() != 3) throw ShapeError("conv1d: weight must be {k, d_in, d_out}, got " + shape_str(w.shape()));
  const std::size_t k = w.dim(0), din = w.dim(1), dout = w.dim(2);
  if (k % 2 == 0) throw ShapeError("conv1d: kernel size must be odd, got " + std::to_string(k));
  if (x.cols() != din) shape_fail("conv1d", x.shape(), w.shape());
  if (b.shape() != Shape{1, dout}) shape_fail("conv1d", w.shape(), b.shape());
  const std::size_t t = x.rows();
  const long half = static_cast<long>(k / 2);
  std::vector<T> y(t * dout);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < dout; ++j) y[i * dout + j] = b[j];
  // Tap `p` maps input row (i + p - half) to output row i.
  auto tap_range = [t, half](std::size_t p, std::size_t& out0, std::size_t& in0, std::size_t& len) {
    const long shift = static_cast<long>(p) - half;
    const long o0 = std::max(0L, -shift);
    const long o1 = std::min(static_cast<long>(t), static_cast<long>(t) - shift);
    out0 = static_cast<std::size_t>(o0);
    in0 = static_cast<std::size_t>(o0 + shift);
    len = o1 > o0 ? static_cast<std::size_t>(o1 - o0) : 0;
  };
  for (std::size_t p = 0; p < k; ++p) {
    std::size_t out0, in0, len;
    tap_range(p, out0, in0, len);
    if (len) gemm_nn(len, din, dout, x.data() + in0 * din, w.data() + p * din * dout, y.data() + out0 * dout);
  }
  count(&FlopCounter::matmul, 2ULL * t * k * din * dout);
  Buf<T> xs = x.storage(), ws = w.storage();
  return finish<T>("conv1d", {t, dout}, std::move(y), {&x, &w, &b},
                   [xs, ws, t, k, din, dout, tap_range](std::span<const T> g, Slots<T> gin) {
                     for (std::size_t p = 0; p < k; ++p) {
                       std::size_t out0, in0, len;
                       tap_range(p, out0, in0, len);
                       if (!len) continue;
                       if (gin[0])
                         gemm_nt(len, dout, din, g.data() + out0 * dout, ws->data() + p * din * dout,
                                 gin[0]->data() + in0 * din);
                       if (gin[1])
                         gemm_tn(din, len, dout, xs->data() + in0 * din, g.data() + out0 * dout,
                                 gin[1]->data() + p * din * dout);
                     }
                     if (gin[2])
                       for (std::size_t i = 0; i < t; ++i)
                         for (std::size_t j = 0; j < dout; ++j) (*gin[2])[j] += g[i * dout + j];
                   });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw Error("dropout", "dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto factor = std::make_shared<std::vector<T>>(x.size());
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*factor)[i] = rng.uniform() < p ? T(0) : keep_scale;
    y[i] = x[i] * (*factor)[i];
  }
  return finish<T>("dropout", x.shape(), std::move(y), {&x}, [factor](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*factor)[i];
  });
}

template <class T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  require_rank2("embedding", table);
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<T> y(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw Error("encoding.token_range",
                  "token id " + std::to_string(ids[i]) + " out of range for vocab " + std::to_string(vocab));
    }
    std::copy_n(table.data() + ids[i] * d, d, y.data() + i * d);
  }
  return finish<T>("embedding", {ids.size(), d}, std::move(y), {&table}, [ids, d](std::span<const T> g, Slots<T> gin) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) (*gin[0])[ids[i] * d + j] += g[i * d + j];
  });
}

#define GSIFN_INSTANTIATE_OPS(T)                                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> transpose(const Tensor<T>&);                                                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> maximum(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> scale(const Tensor<T>&, T);                                                        \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                   \
  template Tensor<T> exp(const Tensor<T>&);                                                             \
  template Tensor<T> log(const Tensor<T>&);                                                             \
  template Tensor<T> tanh(const Tensor<T>&);                                                            \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                         \
  template Tensor<T> log_sigmoid(const Tensor<T>&);                                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                            \
  template Tensor<T> abs(const Tensor<T>&);                                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                             \
  template Tensor<T> mean(const Tensor<T>&);                                                            \
  template Tensor<T> row_sum(const Tensor<T>&);                                                         \
  template Tensor<T> row_max(const Tensor<T>&);                                                         \
  template Tensor<T> col_mean(const Tensor<T>&);                                                        \
  template Tensor<T> cumsum_rows(const Tensor<T>&);                                                     \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mul_row(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> add_col(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> sub_col(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mul_col(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> div_col(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> outer_sum(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                    \
  template std::vector<Tensor<T>> split(const Tensor<T>&, std::size_t, const std::vector<std::size_t>&); \
  template Tensor<T> softmax(const Tensor<T>&, const Tensor<T>*);                                       \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);               \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);                                     \
  template Tensor<T> embedding(const Tensor<T>&, const std::vector<std::size_t>&);

GSIFN_INSTANTIATE_OPS(float)
GSIFN_INSTANTIATE_OPS(double)

}  // namespace gsifn::ops
