#pragma once

#include "activebc/nn/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace activebc::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;  // Adam first moment
  Tensor<T> v;  // Adam second moment

  friend bool operator==(const Param&, const Param&) = default;
};

// Named parameters in insertion order, with their gradients and Adam state.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(const std::string& name, const Shape& shape) {
    if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter " + name);
    params_.push_back({name, Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape),
                       Tensor<T>(shape)});
    return params_.back();
  }

  Param<T>* find(const std::string& name) {
    auto it = std::find_if(params_.begin(), params_.end(),
                           [&](const Param<T>& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
  }
  const Param<T>* find(const std::string& name) const {
    return const_cast<ParamStore*>(this)->find(name);
  }
  Param<T>& at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw std::out_of_range("no parameter named " + name);
  }
  const Param<T>& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), T{0});
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }

  std::uint64_t step = 0;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<Param<T>> params_;
};

}  // namespace activebc::nn
