#pragma once

// LSTM cell with gates packed as (input, forget, candidate, output):
//   z = x Wx + h Wh + b
//   i = sig(z_i)  f = sig(z_f)  g = tanh(z_g)  o = sig(z_o)
//   c' = f * c + i * g,  h' = o * tanh(c')
// Wx is [D_in][4 D_h], Wh is [D_h][4 D_h], b is [4 D_h].

#include "activebc/nn/linear.hpp"
#include "activebc/nn/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace activebc::nn {

template <typename T>
T sigmoid(T z) {
  return T{1} / (T{1} + std::exp(-z));
}

// Per-step activations kept for backpropagation through time.
template <typename T>
struct LstmStepCache {
  std::vector<T> gates;  // [B][4 D_h], post-activation
  std::vector<T> cell;   // [B][D_h]
  std::vector<T> tanh_cell;
  std::vector<T> hidden;
};

template <typename T>
void lstm_forward_step(std::size_t batch, std::size_t din, std::size_t dh, const T* x,
                       const T* h_prev, const T* c_prev, const T* wx, const T* wh, const T* b,
                       LstmStepCache<T>& out) {
  const std::size_t g4 = 4 * dh;
  out.gates.resize(batch * g4);
  out.cell.resize(batch * dh);
  out.tanh_cell.resize(batch * dh);
  out.hidden.resize(batch * dh);
  linear_forward(batch, din, g4, x, wx, b, out.gates.data());
  kernels::gemm_acc(h_prev, wh, out.gates.data(), batch, dh, g4);
  for (std::size_t r = 0; r < batch; ++r) {
    T* z = out.gates.data() + r * g4;
    for (std::size_t j = 0; j < dh; ++j) {
      const T i = sigmoid(z[j]);
      const T f = sigmoid(z[dh + j]);
      const T g = std::tanh(z[2 * dh + j]);
      const T o = sigmoid(z[3 * dh + j]);
      z[j] = i;
      z[dh + j] = f;
      z[2 * dh + j] = g;
      z[3 * dh + j] = o;
      const T c = f * c_prev[r * dh + j] + i * g;
      const T tc = std::tanh(c);
      out.cell[r * dh + j] = c;
      out.tanh_cell[r * dh + j] = tc;
      out.hidden[r * dh + j] = o * tc;
    }
  }
}

// dh, dc: gradient w.r.t. this step's hidden and cell outputs (dc is
// overwritten with the gradient for c_prev). Accumulates dwx, dwh, db and
// writes dx (if non-null) and dh_prev.
template <typename T>
void lstm_backward_step(std::size_t batch, std::size_t din, std::size_t dh, const T* x,
                        const T* h_prev, const T* c_prev, const T* wx, const T* wh,
                        const LstmStepCache<T>& cache, const T* dhidden, T* dcell, T* dwx,
                        T* dwh, T* db, T* dx, T* dh_prev, std::vector<T>& dz) {
  const std::size_t g4 = 4 * dh;
  dz.resize(batch * g4);
  for (std::size_t r = 0; r < batch; ++r) {
    const T* a = cache.gates.data() + r * g4;
    T* d = dz.data() + r * g4;
    for (std::size_t j = 0; j < dh; ++j) {
      const std::size_t k = r * dh + j;
      const T i = a[j], f = a[dh + j], g = a[2 * dh + j], o = a[3 * dh + j];
      const T tc = cache.tanh_cell[k];
      const T dct = dcell[k] + dhidden[k] * o * (T{1} - tc * tc);
      d[j] = dct * g * i * (T{1} - i);
      d[dh + j] = dct * c_prev[k] * f * (T{1} - f);
      d[2 * dh + j] = dct * i * (T{1} - g * g);
      d[3 * dh + j] = dhidden[k] * tc * o * (T{1} - o);
      dcell[k] = dct * f;
    }
  }
  linear_backward(batch, din, g4, x, wx, dz.data(), dwx, db, dx);
  linear_backward<T>(batch, dh, g4, h_prev, wh, dz.data(), dwh, nullptr, dh_prev);
}

template <typename T>
struct LstmState {
  std::vector<T> hidden;
  std::vector<T> cell;
};

template <typename T>
struct LstmParams {
  Tensor<T> wx;  // [D_in, 4 D_h]
  Tensor<T> wh;  // [D_h, 4 D_h]
  Tensor<T> b;   // [4 D_h]

  std::size_t input_dim() const { return wx.shape.at(0); }
  std::size_t hidden_dim() const { return wh.shape.at(0); }
};

// One step for a single sequence; returns (y, state') with y = hidden'.
template <typename T>
std::pair<std::vector<T>, LstmState<T>> lstm_step(const std::vector<T>& x,
                                                  const LstmState<T>& state,
                                                  const LstmParams<T>& p) {
  const std::size_t din = p.input_dim(), dh = p.hidden_dim();
  if (p.wx.shape != Shape{din, 4 * dh} || p.wh.shape != Shape{dh, 4 * dh} ||
      p.b.shape != Shape{4 * dh})
    throw std::invalid_argument("lstm parameter shapes are inconsistent");
  if (x.size() != din || state.hidden.size() != dh || state.cell.size() != dh)
    throw std::invalid_argument("lstm input or state size mismatch");
  LstmStepCache<T> cache;
  lstm_forward_step<T>(1, din, dh, x.data(), state.hidden.data(), state.cell.data(), p.wx.ptr(),
                       p.wh.ptr(), p.b.ptr(), cache);
  check_finite(cache.hidden, "lstm_step");
  check_finite(cache.cell, "lstm_step");
  LstmState<T> next{cache.hidden, cache.cell};
  return {cache.hidden, std::move(next)};
}

}  // namespace activebc::nn
