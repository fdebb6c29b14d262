#pragma once

// Inner loops shared by the layers. Reductions use a fixed lane layout
// (16 partial sums combined in index order, then the tail), so results are
// reproducible run to run while still vectorizing without -ffast-math.

#include <cstddef>

namespace activebc::nn::kernels {

inline constexpr std::size_t kLanes = 16;

template <typename T>
T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  T s{0};
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T sum(const T* __restrict a, std::size_t n) {
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l];
  T s{0};
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; i < n; ++i) s += a[i];
  return s;
}

// y += alpha * x
template <typename T>
void axpy(T alpha, const T* __restrict x, T* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C[m][n] += sum_k A[m][k] * B[k][n], row-major, accumulated over k in order.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    T* crow = c + r * n;
    const T* arow = a + r * k;
    for (std::size_t j = 0; j < k; ++j) {
      const T av = arow[j];
      if (av == T{0}) continue;
      axpy(av, b + j * n, crow, n);
    }
  }
}

}  // namespace activebc::nn::kernels
