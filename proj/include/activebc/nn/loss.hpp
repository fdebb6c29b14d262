#pragma once

#include "activebc/nn/tensor.hpp"

#include <cstddef>
#include <stdexcept>

namespace activebc::nn {

template <typename T>
struct LossResult {
  T value{};
  Tensor<T> grad;
};

// Mean of squared differences over every element; grad = 2 (pred - target) / N.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape != target.shape)
    throw std::invalid_argument("mse_loss shape mismatch: " + shape_string(pred.shape) + " vs " +
                                shape_string(target.shape));
  if (pred.size() == 0) throw std::invalid_argument("mse_loss on empty tensors");
  LossResult<T> out{T{0}, Tensor<T>(pred.shape)};
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.value = static_cast<T>(acc / n);
  check_finite(out.grad.data, "mse_loss");
  if (!std::isfinite(out.value)) throw NumericFault("mse_loss");
  return out;
}

}  // namespace activebc::nn
