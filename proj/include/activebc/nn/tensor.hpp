#pragma once

#include "activebc/error.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace activebc::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Dense row-major tensor.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape))
      throw std::invalid_argument("tensor data does not match shape " + shape_string(shape));
  }

  std::size_t size() const { return data.size(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename T>
void check_finite(std::span<const T> values, const char* op) {
  for (const T v : values)
    if (!std::isfinite(v)) throw NumericFault(op);
}

template <typename T>
void check_finite(const std::vector<T>& values, const char* op) {
  check_finite(std::span<const T>(values), op);
}

}  // namespace activebc::nn
