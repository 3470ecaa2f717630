#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "pip/tensor.hpp"

// Free-function tensor ops. Every primitive records a backward closure built
// from these same ops, so gradients of gradients come out of the one engine.

namespace pip {

template <typename S>
inline void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

template <typename S>
inline void check_2d(const Tensor<S>& a, const char* op) {
  if (a.ndim() != 2)
    throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " +
                                shape_str(a.shape()));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "add");
  return finish_op<S>(
      "add", a.shape(), a.array() + b.array(), {a, b},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? g : Tensor<S>{}, need[1] ? g : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> accumulate_grad(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "sub");
  return finish_op<S>(
      "sub", a.shape(), a.array() - b.array(), {a, b},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? g : Tensor<S>{}, need[1] ? neg(g) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return finish_op<S>(
      "neg", a.shape(), -a.array(), {a},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? neg(g) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "mul");
  return finish_op<S>(
      "mul", a.shape(), a.array() * b.array(), {a, b},
      [a, b](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? mul(g, b) : Tensor<S>{}, need[1] ? mul(g, a) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "div");
  return finish_op<S>(
      "div", a.shape(), a.array() / b.array(), {a, b},
      [a, b](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        Tensor<S> da = need[0] ? div(g, b) : Tensor<S>{};
        Tensor<S> db = need[1] ? neg(div(mul(g, a), mul(b, b))) : Tensor<S>{};
        return {da, db};
      });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double k) {
  return finish_op<S>(
      "scale", a.shape(), a.array() * static_cast<S>(k), {a},
      [k](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? scale(g, k) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, double k) {
  return finish_op<S>(
      "add_scalar", a.shape(), a.array() + static_cast<S>(k), {a},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? g : Tensor<S>{}};
      });
}

// x^p elementwise; p is a compile-time-constant-like exponent, not a tensor.
template <typename S>
Tensor<S> pow_scalar(const Tensor<S>& a, double p) {
  FlatArray<S> v(a.size());
  const auto& x = a.array();
  if (p == 2.0)
    v = x * x;
  else if (p == 0.5)
    v = x.sqrt();
  else if (p == -0.5)
    v = x.rsqrt();
  else if (p == -1.0)
    v = x.inverse();
  else if (p == 1.0)
    v = x;
  else
    v = x.pow(static_cast<S>(p));
  return finish_op<S>(
      "pow_scalar", a.shape(), std::move(v), {a},
      [a, p](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        if (!need[0]) return {Tensor<S>{}};
        return {scale(mul(g, pow_scalar(a, p - 1.0)), p)};
      });
}

template <typename S>
Tensor<S> square(const Tensor<S>& a) {
  return mul(a, a);
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& a) {
  return pow_scalar(a, 0.5);
}

template <typename S>
Tensor<S> rsqrt(const Tensor<S>& a) {
  return pow_scalar(a, -0.5);
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  return finish_op<S>(
      "exp", a.shape(), a.array().exp(), {a},
      [a](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? mul(g, exp(a)) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  return finish_op<S>(
      "log", a.shape(), a.array().log(), {a},
      [a](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? mul(g, pow_scalar(a, -1.0)) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  FlatArray<S> v(a.size());
  const auto& x = a.array();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S xi = x[i];
    v[i] = xi >= S(0) ? S(1) / (S(1) + std::exp(-xi)) : std::exp(xi) / (S(1) + std::exp(xi));
  }
  return finish_op<S>(
      "sigmoid", a.shape(), std::move(v), {a},
      [a](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        if (!need[0]) return {Tensor<S>{}};
        Tensor<S> s = sigmoid(a);
        return {mul(g, sub(s, mul(s, s)))};
      });
}

// log(1 + e^x), evaluated in the overflow-safe split form
template <typename S>
Tensor<S> softplus(const Tensor<S>& a) {
  FlatArray<S> v(a.size());
  const auto& x = a.array();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S xi = x[i];
    v[i] = xi > S(0) ? xi + std::log1p(std::exp(-xi)) : std::log1p(std::exp(xi));
  }
  return finish_op<S>(
      "softplus", a.shape(), std::move(v), {a},
      [a](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? mul(g, sigmoid(a)) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& a, double slope = 0.2) {
  const S sl = static_cast<S>(slope);
  FlatArray<S> v = (a.array() >= S(0)).select(a.array(), a.array() * sl);
  // The local slope is constant almost everywhere, so the backward mask is a
  // plain constant tensor and higher-order passes treat it as such.
  FlatArray<S> mask_v = (a.array() >= S(0)).select(FlatArray<S>::Ones(a.size()),
                                                   FlatArray<S>::Constant(a.size(), sl));
  Tensor<S> mask = Tensor<S>::from_array(a.shape(), std::move(mask_v));
  return finish_op<S>(
      "leaky_relu", a.shape(), std::move(v), {a},
      [mask](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? mul(g, mask) : Tensor<S>{}};
      });
}

// ---------------------------------------------------------------------------
// shape & matmul
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i] < 0) throw std::invalid_argument("reshape: negative dim");
  Shape in_shape = a.shape();
  Tensor<S> out = Tensor<S>::view_of(a, std::move(shape));
  if (GradMode::enabled() && a.requires_grad()) {
    auto fn = std::make_unique<LambdaGradFn<S>>(
        "reshape",
        [in_shape](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
          return {need[0] ? reshape(g, in_shape) : Tensor<S>{}};
        });
    fn->inputs = {a};
    out.set_grad_fn(std::move(fn));
  }
  return out;
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& a) {
  check_2d(a, "transpose2d");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  FlatArray<S> v(a.size());
  MatMap<S>(v.data(), n, m) = a.mat(m, n).transpose();
  return finish_op<S>(
      "transpose2d", {n, m}, std::move(v), {a},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? transpose2d(g) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> matmul_tn(const Tensor<S>& a, const Tensor<S>& b);

// a[m,k] * b[k,n]
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul: inner dims " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  FlatArray<S> v(m * n);
  MatMap<S>(v.data(), m, n).noalias() = a.mat(m, k) * b.mat(k, n);
  return finish_op<S>(
      "matmul", {m, n}, std::move(v), {a, b},
      [a, b](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        Tensor<S> da = need[0] ? matmul_nt(g, b) : Tensor<S>{};
        Tensor<S> db = need[1] ? matmul_tn(a, g) : Tensor<S>{};
        return {da, db};
      });
}

// a[m,k] * b[n,k]^T
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw std::invalid_argument("matmul_nt: inner dims " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  FlatArray<S> v(m * n);
  MatMap<S>(v.data(), m, n).noalias() = a.mat(m, k) * b.mat(n, k).transpose();
  return finish_op<S>(
      "matmul_nt", {m, n}, std::move(v), {a, b},
      [a, b](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        Tensor<S> da = need[0] ? matmul(g, b) : Tensor<S>{};
        Tensor<S> db = need[1] ? matmul_tn(g, a) : Tensor<S>{};
        return {da, db};
      });
}

// a[k,m]^T * b[k,n]
template <typename S>
Tensor<S> matmul_tn(const Tensor<S>& a, const Tensor<S>& b) {
  check_2d(a, "matmul_tn");
  check_2d(b, "matmul_tn");
  const std::int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul_tn: inner dims " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  FlatArray<S> v(m * n);
  MatMap<S>(v.data(), m, n).noalias() = a.mat(k, m).transpose() * b.mat(k, n);
  return finish_op<S>(
      "matmul_tn", {m, n}, std::move(v), {a, b},
      [a, b](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        Tensor<S> da = need[0] ? matmul_nt(b, g) : Tensor<S>{};
        Tensor<S> db = need[1] ? matmul(a, g) : Tensor<S>{};
        return {da, db};
      });
}

// ---------------------------------------------------------------------------
// reductions & broadcasts
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a);
template <typename S>
Tensor<S> broadcast_scalar(const Tensor<S>& s, Shape shape);

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  FlatArray<S> v(1);
  v[0] = a.array().sum();
  Shape in_shape = a.shape();
  return finish_op<S>(
      "sum_all", {1}, std::move(v), {a},
      [in_shape](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? broadcast_scalar(g, in_shape) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> broadcast_scalar(const Tensor<S>& s, Shape shape) {
  if (s.size() != 1) throw std::invalid_argument("broadcast_scalar: source not scalar");
  FlatArray<S> v = FlatArray<S>::Constant(shape_size(shape), s.at(0));
  return finish_op<S>(
      "broadcast_scalar", std::move(shape), std::move(v), {s},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? sum_all(g) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

template <typename S>
Tensor<S> row_sum(const Tensor<S>& a);
template <typename S>
Tensor<S> col_sum(const Tensor<S>& a);
template <typename S>
Tensor<S> rep_row(const Tensor<S>& v, std::int64_t m);
template <typename S>
Tensor<S> rep_col(const Tensor<S>& v, std::int64_t n);

// [m,n] -> [m]
template <typename S>
Tensor<S> row_sum(const Tensor<S>& a) {
  check_2d(a, "row_sum");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  FlatArray<S> v(m);
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(v.data(), m) = a.mat(m, n).rowwise().sum();
  return finish_op<S>(
      "row_sum", {m}, std::move(v), {a},
      [n](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? rep_col(g, n) : Tensor<S>{}};
      });
}

// [m,n] -> [n]
template <typename S>
Tensor<S> col_sum(const Tensor<S>& a) {
  check_2d(a, "col_sum");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  FlatArray<S> v(n);
  Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(v.data(), n) = a.mat(m, n).colwise().sum();
  return finish_op<S>(
      "col_sum", {n}, std::move(v), {a},
      [m](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? rep_row(g, m) : Tensor<S>{}};
      });
}

// [n] -> [m,n], every row a copy of v
template <typename S>
Tensor<S> rep_row(const Tensor<S>& v, std::int64_t m) {
  if (v.ndim() != 1) throw std::invalid_argument("rep_row: expected 1-d");
  const std::int64_t n = v.dim(0);
  FlatArray<S> out(m * n);
  MatMap<S>(out.data(), m, n).rowwise() =
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(v.data(), n);
  return finish_op<S>(
      "rep_row", {m, n}, std::move(out), {v},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? col_sum(g) : Tensor<S>{}};
      });
}

// [m] -> [m,n], every column a copy of v
template <typename S>
Tensor<S> rep_col(const Tensor<S>& v, std::int64_t n) {
  if (v.ndim() != 1) throw std::invalid_argument("rep_col: expected 1-d");
  const std::int64_t m = v.dim(0);
  FlatArray<S> out(m * n);
  MatMap<S>(out.data(), m, n).colwise() =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(v.data(), m);
  return finish_op<S>(
      "rep_col", {m, n}, std::move(out), {v},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? row_sum(g) : Tensor<S>{}};
      });
}

// ---------------------------------------------------------------------------
// convolution building blocks (stride 1, square kernels)
// ---------------------------------------------------------------------------

struct ConvGeom {
  std::int64_t batch, channels, height, width, kernel, pad;
  std::int64_t out_h() const { return height + 2 * pad - kernel + 1; }
  std::int64_t out_w() const { return width + 2 * pad - kernel + 1; }
};

template <typename S>
Tensor<S> im2col(const Tensor<S>& x, std::int64_t kernel, std::int64_t pad);
template <typename S>
Tensor<S> col2im(const Tensor<S>& cols, const ConvGeom& geom);

// [B,C,H,W] -> [C*k*k, B*OH*OW]; zero padding
template <typename S>
Tensor<S> im2col(const Tensor<S>& x, std::int64_t kernel, std::int64_t pad) {
  if (x.ndim() != 4) throw std::invalid_argument("im2col: expected [B,C,H,W]");
  const ConvGeom geom{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel, pad};
  const std::int64_t B = geom.batch, C = geom.channels, H = geom.height, W = geom.width;
  const std::int64_t k = kernel, OH = geom.out_h(), OW = geom.out_w();
  const std::int64_t cols_n = B * OH * OW;

  FlatArray<S> out = FlatArray<S>::Zero(C * k * k * cols_n);
  const S* src = x.data();
  S* dst = out.data();
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj) {
        const std::int64_t row = (c * k + ki) * k + kj;
        S* drow = dst + row * cols_n;
        const std::int64_t ow_lo = std::max<std::int64_t>(0, pad - kj);
        const std::int64_t ow_hi = std::min<std::int64_t>(OW, W + pad - kj);
        for (std::int64_t b = 0; b < B; ++b) {
          const S* splane = src + (b * C + c) * H * W;
          for (std::int64_t oh = 0; oh < OH; ++oh) {
            const std::int64_t ih = oh + ki - pad;
            if (ih < 0 || ih >= H || ow_lo >= ow_hi) continue;
            const S* srow = splane + ih * W + (ow_lo + kj - pad);
            std::memcpy(drow + (b * OH + oh) * OW + ow_lo, srow,
                        sizeof(S) * static_cast<std::size_t>(ow_hi - ow_lo));
          }
        }
      }
    }
  }
  return finish_op<S>(
      "im2col", {C * k * k, cols_n}, std::move(out), {x},
      [geom](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? col2im(g, geom) : Tensor<S>{}};
      });
}

// adjoint of im2col: [C*k*k, B*OH*OW] -> [B,C,H,W] with overlap accumulation
template <typename S>
Tensor<S> col2im(const Tensor<S>& cols, const ConvGeom& geom) {
  const std::int64_t B = geom.batch, C = geom.channels, H = geom.height, W = geom.width;
  const std::int64_t k = geom.kernel, pad = geom.pad, OH = geom.out_h(), OW = geom.out_w();
  const std::int64_t cols_n = B * OH * OW;
  if (cols.ndim() != 2 || cols.dim(0) != C * k * k || cols.dim(1) != cols_n)
    throw std::invalid_argument("col2im: geometry mismatch " + shape_str(cols.shape()));

  FlatArray<S> out = FlatArray<S>::Zero(B * C * H * W);
  const S* src = cols.data();
  S* dst = out.data();
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj) {
        const std::int64_t row = (c * k + ki) * k + kj;
        const S* srow_base = src + row * cols_n;
        const std::int64_t ow_lo = std::max<std::int64_t>(0, pad - kj);
        const std::int64_t ow_hi = std::min<std::int64_t>(OW, W + pad - kj);
        for (std::int64_t b = 0; b < B; ++b) {
          S* dplane = dst + (b * C + c) * H * W;
          for (std::int64_t oh = 0; oh < OH; ++oh) {
            const std::int64_t ih = oh + ki - pad;
            if (ih < 0 || ih >= H || ow_lo >= ow_hi) continue;
            S* drow = dplane + ih * W + (ow_lo + kj - pad);
            const S* srow = srow_base + (b * OH + oh) * OW + ow_lo;
            for (std::int64_t t = 0; t < ow_hi - ow_lo; ++t) drow[t] += srow[t];
          }
        }
      }
    }
  }
  ConvGeom g2 = geom;
  return finish_op<S>(
      "col2im", {B, C, H, W}, std::move(out), {cols},
      [g2](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? im2col(g, g2.kernel, g2.pad) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> to_batch_major(const Tensor<S>& y, std::int64_t batch);
template <typename S>
Tensor<S> to_channel_major(const Tensor<S>& x);

// [out, B*Spatial] -> [B, out, Spatial]
template <typename S>
Tensor<S> to_batch_major(const Tensor<S>& y, std::int64_t batch) {
  check_2d(y, "to_batch_major");
  const std::int64_t out_ch = y.dim(0);
  if (y.dim(1) % batch != 0) throw std::invalid_argument("to_batch_major: bad batch");
  const std::int64_t spatial = y.dim(1) / batch;
  FlatArray<S> out(y.size());
  const S* src = y.data();
  S* dst = out.data();
  for (std::int64_t o = 0; o < out_ch; ++o)
    for (std::int64_t b = 0; b < batch; ++b)
      std::memcpy(dst + (b * out_ch + o) * spatial, src + (o * batch + b) * spatial,
                  sizeof(S) * static_cast<std::size_t>(spatial));
  return finish_op<S>(
      "to_batch_major", {batch, out_ch, spatial}, std::move(out), {y},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? to_channel_major(g) : Tensor<S>{}};
      });
}

// [B, C, Spatial] -> [C, B*Spatial]
template <typename S>
Tensor<S> to_channel_major(const Tensor<S>& x) {
  if (x.ndim() != 3) throw std::invalid_argument("to_channel_major: expected [B,C,S]");
  const std::int64_t batch = x.dim(0), ch = x.dim(1), spatial = x.dim(2);
  FlatArray<S> out(x.size());
  const S* src = x.data();
  S* dst = out.data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t c = 0; c < ch; ++c)
      std::memcpy(dst + (c * batch + b) * spatial, src + (b * ch + c) * spatial,
                  sizeof(S) * static_cast<std::size_t>(spatial));
  return finish_op<S>(
      "to_channel_major", {ch, batch * spatial}, std::move(out), {x},
      [batch](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? to_batch_major(g, batch) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> upsample2x(const Tensor<S>& x);
template <typename S>
Tensor<S> sumpool2x(const Tensor<S>& x);

// nearest-neighbour [B,C,H,W] -> [B,C,2H,2W]
template <typename S>
Tensor<S> upsample2x(const Tensor<S>& x) {
  if (x.ndim() != 4) throw std::invalid_argument("upsample2x: expected [B,C,H,W]");
  const std::int64_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  FlatArray<S> out(x.size() * 4);
  const S* src = x.data();
  S* dst = out.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const S* sp = src + p * H * W;
    S* dp = dst + p * 4 * H * W;
    for (std::int64_t i = 0; i < H; ++i) {
      S* r0 = dp + (2 * i) * 2 * W;
      for (std::int64_t j = 0; j < W; ++j) {
        const S v = sp[i * W + j];
        r0[2 * j] = v;
        r0[2 * j + 1] = v;
      }
      std::memcpy(r0 + 2 * W, r0, sizeof(S) * static_cast<std::size_t>(2 * W));
    }
  }
  return finish_op<S>(
      "upsample2x", {x.dim(0), x.dim(1), 2 * H, 2 * W}, std::move(out), {x},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? sumpool2x(g) : Tensor<S>{}};
      });
}

// 2x2 block sum [B,C,H,W] -> [B,C,H/2,W/2]; mean pooling is scale(.., 1/4)
template <typename S>
Tensor<S> sumpool2x(const Tensor<S>& x) {
  if (x.ndim() != 4) throw std::invalid_argument("sumpool2x: expected [B,C,H,W]");
  const std::int64_t H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw std::invalid_argument("sumpool2x: odd extent");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = H / 2, w = W / 2;
  FlatArray<S> out(planes * h * w);
  const S* src = x.data();
  S* dst = out.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const S* sp = src + p * H * W;
    S* dp = dst + p * h * w;
    for (std::int64_t i = 0; i < h; ++i) {
      const S* r0 = sp + (2 * i) * W;
      const S* r1 = r0 + W;
      for (std::int64_t j = 0; j < w; ++j)
        dp[i * w + j] = r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
    }
  }
  return finish_op<S>(
      "sumpool2x", {x.dim(0), x.dim(1), h, w}, std::move(out), {x},
      [](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? upsample2x(g) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> avgpool2x(const Tensor<S>& x) {
  return scale(sumpool2x(x), 0.25);
}

// ---------------------------------------------------------------------------
// per-sample pixel permutations (used by differentiable augmentation)
// ---------------------------------------------------------------------------

using PixelMaps = std::shared_ptr<const std::vector<std::int32_t>>;  // [B * H*W] source idx

template <typename S>
Tensor<S> pixel_gather(const Tensor<S>& x, const PixelMaps& maps);
template <typename S>
Tensor<S> pixel_scatter_add(const Tensor<S>& x, const PixelMaps& maps);

// out[b,c,s] = x[b,c,maps[b*S+s]]; one spatial map per sample, shared by channels
template <typename S>
Tensor<S> pixel_gather(const Tensor<S>& x, const PixelMaps& maps) {
  if (x.ndim() != 4) throw std::invalid_argument("pixel_gather: expected [B,C,H,W]");
  const std::int64_t B = x.dim(0), C = x.dim(1), spatial = x.dim(2) * x.dim(3);
  if (static_cast<std::int64_t>(maps->size()) != B * spatial)
    throw std::invalid_argument("pixel_gather: map size mismatch");
  FlatArray<S> out(x.size());
  const S* src = x.data();
  S* dst = out.data();
  for (std::int64_t b = 0; b < B; ++b) {
    const std::int32_t* m = maps->data() + b * spatial;
    for (std::int64_t c = 0; c < C; ++c) {
      const S* sp = src + (b * C + c) * spatial;
      S* dp = dst + (b * C + c) * spatial;
      for (std::int64_t s = 0; s < spatial; ++s) dp[s] = sp[m[s]];
    }
  }
  return finish_op<S>(
      "pixel_gather", x.shape(), std::move(out), {x},
      [maps](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? pixel_scatter_add(g, maps) : Tensor<S>{}};
      });
}

template <typename S>
Tensor<S> pixel_scatter_add(const Tensor<S>& x, const PixelMaps& maps) {
  if (x.ndim() != 4) throw std::invalid_argument("pixel_scatter_add: expected [B,C,H,W]");
  const std::int64_t B = x.dim(0), C = x.dim(1), spatial = x.dim(2) * x.dim(3);
  FlatArray<S> out = FlatArray<S>::Zero(x.size());
  const S* src = x.data();
  S* dst = out.data();
  for (std::int64_t b = 0; b < B; ++b) {
    const std::int32_t* m = maps->data() + b * spatial;
    for (std::int64_t c = 0; c < C; ++c) {
      const S* sp = src + (b * C + c) * spatial;
      S* dp = dst + (b * C + c) * spatial;
      for (std::int64_t s = 0; s < spatial; ++s) dp[m[s]] += sp[s];
    }
  }
  return finish_op<S>(
      "pixel_scatter_add", x.shape(), std::move(out), {x},
      [maps](const Tensor<S>& g, const std::vector<char>& need) -> std::vector<Tensor<S>> {
        return {need[0] ? pixel_gather(g, maps) : Tensor<S>{}};
      });
}

// ---------------------------------------------------------------------------
// composites
// ---------------------------------------------------------------------------

// x[B,C,H,W] (*) w[out,C,k,k], zero padding, stride 1
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, std::int64_t pad) {
  if (w.ndim() != 4) throw std::invalid_argument("conv2d: weights must be [out,in,k,k]");
  const std::int64_t B = x.dim(0), out_ch = w.dim(0), in_ch = w.dim(1), k = w.dim(2);
  if (x.dim(1) != in_ch)
    throw std::invalid_argument("conv2d: channels " + shape_str(x.shape()) + " vs " +
                                shape_str(w.shape()));
  Tensor<S> cols = im2col(x, k, pad);                              // [C*k*k, B*S]
  Tensor<S> w2d = reshape(w, {out_ch, in_ch * k * k});
  Tensor<S> y = matmul(w2d, cols);                                 // [out, B*S]
  const std::int64_t oh = x.dim(2) + 2 * pad - k + 1, ow = x.dim(3) + 2 * pad - k + 1;
  return reshape(to_batch_major(y, B), {B, out_ch, oh, ow});
}

// rows of x scaled by v: x[m,n] * v[m] (broadcast over columns)
template <typename S>
Tensor<S> mul_rows(const Tensor<S>& x, const Tensor<S>& v) {
  check_2d(x, "mul_rows");
  return mul(x, rep_col(v, x.dim(1)));
}

// x[B,in] * W[out,in]^T + b
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  Tensor<S> y = matmul_nt(x, weight);
  if (bias.defined()) y = add(y, rep_row(bias, x.dim(0)));
  return y;
}

// per-row dot product of equally shaped [m,n] tensors -> [m]
template <typename S>
Tensor<S> rowwise_dot(const Tensor<S>& a, const Tensor<S>& b) {
  return row_sum(mul(a, b));
}

// RMS normalization over each row: x / sqrt(mean(x^2) + eps)
template <typename S>
Tensor<S> rms_normalize_rows(const Tensor<S>& x, double eps = 1e-8) {
  check_2d(x, "rms_normalize_rows");
  Tensor<S> ms = scale(row_sum(square(x)), 1.0 / static_cast<double>(x.dim(1)));
  return mul_rows(x, rsqrt(add_scalar(ms, eps)));
}

}  // namespace pip
