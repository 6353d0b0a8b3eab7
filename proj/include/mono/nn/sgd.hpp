#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mono/nn/tensor.hpp"

namespace mono::nn {

template <typename T>
struct NamedParam {
  std::string name;
  TensorPtr<T> tensor;
};

// SGD with classic momentum and L2 weight decay folded into the gradient:
//   v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
template <typename T>
struct SgdState {
  T learning_rate;
  T momentum = T(0);
  T weight_decay = T(0);
  std::unordered_map<const Tensor<T>*, std::vector<T>> velocity;

  explicit SgdState(T lr, T mom = T(0), T wd = T(0))
      : learning_rate(lr), momentum(mom), weight_decay(wd) {
    if (!(lr >= T(0))) throw ValidationError("sgd: learning rate must be nonnegative");
    if (!(mom >= T(0) && mom < T(1))) throw ValidationError("sgd: momentum must be in [0,1)");
    if (!(wd >= T(0))) throw ValidationError("sgd: weight decay must be nonnegative");
  }
};

template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, SgdState<T>& s) {
  for (const auto& p : params) {
    Tensor<T>& t = *p.tensor;
    t.ensure_grad();
    for (const T& g : t.grad)
      if (std::isnan(g))
        throw TrainingError("sgd: NaN gradient in parameter '" + p.name + "' (diverged)");
    auto& v = s.velocity[&t];
    if (v.size() != t.data.size()) v.assign(t.data.size(), T(0));
    for (size_t i = 0; i < t.data.size(); ++i) {
      v[i] = s.momentum * v[i] + t.grad[i] + s.weight_decay * t.data[i];
      t.data[i] -= s.learning_rate * v[i];
    }
  }
}

template <typename T>
void zero_grads(const std::vector<NamedParam<T>>& params) {
  for (const auto& p : params) {
    p.tensor->ensure_grad();
    p.tensor->zero_grad();
  }
}

}  // namespace mono::nn
