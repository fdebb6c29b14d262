#pragma once

// 3x3 convolution (cross-correlation) with zero padding 1.
//
// Batched activations use a channel-major layout [C][B][H][W] so that one
// im2col matrix covers the whole batch and every inner loop runs over a long
// contiguous row. Weights are [C_out][C_in * 9] with (c_in, ky, kx) order.

#include "activebc/nn/kernels.hpp"
#include "activebc/nn/tensor.hpp"

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace activebc::nn {

struct Conv2dGeom {
  int in_ch = 1;
  int out_ch = 1;
  int in_h = 1;
  int in_w = 1;
  int stride = 1;

  static constexpr int kKernel = 3;
  static constexpr int kPad = 1;

  int out_h() const { return (in_h + 2 * kPad - kKernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * kPad - kKernel) / stride + 1; }
  std::size_t patch() const { return static_cast<std::size_t>(in_ch) * kKernel * kKernel; }
  std::size_t weight_count() const { return static_cast<std::size_t>(out_ch) * patch(); }
  std::size_t in_plane() const { return static_cast<std::size_t>(in_h) * in_w; }
  std::size_t out_plane() const { return static_cast<std::size_t>(out_h()) * out_w(); }

  void validate() const {
    if (in_ch < 1 || out_ch < 1 || in_h < 1 || in_w < 1 || stride < 1)
      throw std::invalid_argument("conv2d geometry must be positive");
  }
};

namespace detail {

template <typename T>
void im2col(const Conv2dGeom& g, std::size_t batch, const T* in, std::vector<T>& col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), n = batch * oh * ow;
  col.assign(g.patch() * n, T{0});
  for (int ci = 0; ci < g.in_ch; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * n;
        for (std::size_t b = 0; b < batch; ++b) {
          const T* plane = in + (static_cast<std::size_t>(ci) * batch + b) * g.in_plane();
          T* dst = row + b * oh * ow;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const int iy = static_cast<int>(oy) * g.stride + ky - 1;
            if (iy < 0 || iy >= g.in_h) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const int ix = static_cast<int>(ox) * g.stride + kx - 1;
              if (ix < 0 || ix >= g.in_w) continue;
              dst[oy * ow + ox] = plane[static_cast<std::size_t>(iy) * g.in_w + ix];
            }
          }
        }
      }
}

template <typename T>
void col2im(const Conv2dGeom& g, std::size_t batch, const std::vector<T>& col, T* din) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), n = batch * oh * ow;
  std::fill(din, din + static_cast<std::size_t>(g.in_ch) * batch * g.in_plane(), T{0});
  for (int ci = 0; ci < g.in_ch; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * n;
        for (std::size_t b = 0; b < batch; ++b) {
          T* plane = din + (static_cast<std::size_t>(ci) * batch + b) * g.in_plane();
          const T* src = row + b * oh * ow;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const int iy = static_cast<int>(oy) * g.stride + ky - 1;
            if (iy < 0 || iy >= g.in_h) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const int ix = static_cast<int>(ox) * g.stride + kx - 1;
              if (ix < 0 || ix >= g.in_w) continue;
              plane[static_cast<std::size_t>(iy) * g.in_w + ix] += src[oy * ow + ox];
            }
          }
        }
      }
}

}  // namespace detail

// in: [C_in][B][H][W], out: [C_out][B][H'][W']. `col` is scratch and holds
// the im2col matrix afterwards, which conv2d_backward reuses.
template <typename T>
void conv2d_forward_batch(const Conv2dGeom& g, std::size_t batch, const T* in, const T* w,
                          const T* bias, T* out, std::vector<T>& col) {
  detail::im2col(g, batch, in, col);
  const std::size_t n = batch * g.out_plane(), k = g.patch();
  for (int co = 0; co < g.out_ch; ++co) {
    T* orow = out + static_cast<std::size_t>(co) * n;
    std::fill(orow, orow + n, bias[co]);
  }
  kernels::gemm_acc(w, col.data(), out, static_cast<std::size_t>(g.out_ch), k, n);
}

// Accumulates into dw and db; writes din when non-null. `col` must still
// hold the forward im2col matrix for the same input.
template <typename T>
void conv2d_backward_batch(const Conv2dGeom& g, std::size_t batch, const std::vector<T>& col,
                           const T* w, const T* dout, T* dw, T* db, T* din,
                           std::vector<T>& dcol) {
  const std::size_t n = batch * g.out_plane(), k = g.patch();
  for (int co = 0; co < g.out_ch; ++co) {
    const T* drow = dout + static_cast<std::size_t>(co) * n;
    db[co] += kernels::sum(drow, n);
    for (std::size_t j = 0; j < k; ++j)
      dw[static_cast<std::size_t>(co) * k + j] += kernels::dot(drow, col.data() + j * n, n);
  }
  if (din == nullptr) return;
  dcol.assign(k * n, T{0});
  for (int co = 0; co < g.out_ch; ++co) {
    const T* drow = dout + static_cast<std::size_t>(co) * n;
    for (std::size_t j = 0; j < k; ++j) {
      const T wv = w[static_cast<std::size_t>(co) * k + j];
      kernels::axpy(wv, drow, dcol.data() + j * n, n);
    }
  }
  detail::col2im(g, batch, dcol, din);
}

// Single image: input [C_in, H, W], weights [C_out, C_in, 3, 3], bias [C_out].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias, int stride) {
  if (input.shape.size() != 3 || weights.shape.size() != 4 || bias.shape.size() != 1)
    throw std::invalid_argument("conv2d expects input [C,H,W], weights [O,C,3,3], bias [O]");
  if (weights.shape[1] != input.shape[0] || weights.shape[2] != 3 || weights.shape[3] != 3 ||
      bias.shape[0] != weights.shape[0])
    throw std::invalid_argument("conv2d shape mismatch: input " + shape_string(input.shape) +
                                ", weights " + shape_string(weights.shape));
  Conv2dGeom g{static_cast<int>(input.shape[0]), static_cast<int>(weights.shape[0]),
               static_cast<int>(input.shape[1]), static_cast<int>(input.shape[2]), stride};
  g.validate();
  Tensor<T> out({static_cast<std::size_t>(g.out_ch), static_cast<std::size_t>(g.out_h()),
                 static_cast<std::size_t>(g.out_w())});
  std::vector<T> col;
  conv2d_forward_batch(g, 1, input.ptr(), weights.ptr(), bias.ptr(), out.ptr(), col);
  check_finite(out.data, "conv2d");
  return out;
}

}  // namespace activebc::nn
