#pragma once

// Fully connected layer, y = x W + b with W stored [in][out].

#include "activebc/nn/kernels.hpp"

#include <algorithm>
#include <cstddef>

namespace activebc::nn {

template <typename T>
void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                    const T* b, T* y) {
  for (std::size_t r = 0; r < batch; ++r) std::copy(b, b + out, y + r * out);
  kernels::gemm_acc(x, w, y, batch, in, out);
}

// Accumulates dw and db (skipped when null); writes dx when non-null.
template <typename T>
void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                     const T* dy, T* dw, T* db, T* dx) {
  for (std::size_t r = 0; r < batch; ++r) {
    const T* dyr = dy + r * out;
    if (db != nullptr) kernels::axpy(T{1}, dyr, db, out);
    const T* xr = x + r * in;
    for (std::size_t i = 0; i < in; ++i)
      if (xr[i] != T{0}) kernels::axpy(xr[i], dyr, dw + i * out, out);
    if (dx != nullptr)
      for (std::size_t i = 0; i < in; ++i) dx[r * in + i] = kernels::dot(w + i * out, dyr, out);
  }
}

template <typename T>
void relu_inplace(T* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = v[i] > T{0} ? v[i] : T{0};
}

// dv *= (activation > 0), using the post-activation values.
template <typename T>
void relu_backward_inplace(const T* activated, T* dv, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dv[i] = activated[i] > T{0} ? dv[i] : T{0};
}

}  // namespace activebc::nn
