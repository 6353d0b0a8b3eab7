#pragma once

#include <string>
#include <vector>

#include "mono/nn/ops.hpp"
#include "mono/rng.hpp"

namespace mono::nn {

// Layer structs own their parameter tensors; ops stay free functions so the
// same graph machinery serves encoders, probes and tests.

template <typename T>
struct Conv2d {
  TensorPtr<T> weight;  // (out_ch, in_ch, kh, kw)
  TensorPtr<T> bias;    // (out_ch)
  int stride = 1;
  int pad = 0;

  TensorPtr<T> forward(const TensorPtr<T>& x) const {
    return conv2d(x, weight, bias, stride, stride, pad, pad);
  }
};

template <typename T>
struct BatchNorm2d {
  TensorPtr<T> scale;  // gamma
  TensorPtr<T> shift;  // beta
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  TensorPtr<T> forward(const TensorPtr<T>& x, bool training, bool update_running = true) {
    return batchnorm2d(x, scale, shift, running_mean, running_var, momentum, epsilon, training,
                       update_running);
  }
};

template <typename T>
struct Linear {
  TensorPtr<T> weight;  // (out, in)
  TensorPtr<T> bias;    // (out)

  TensorPtr<T> forward(const TensorPtr<T>& x) const { return linear(x, weight, bias); }
};

// Kaiming fan-in normal init; batchnorm starts as identity.

template <typename T>
Conv2d<T> make_conv2d(int in_ch, int out_ch, int k, int stride, int pad, SampleRng& rng) {
  Conv2d<T> c;
  c.weight = make_tensor<T>({out_ch, in_ch, k, k}, true);
  c.bias = make_tensor<T>({out_ch}, true);
  c.stride = stride;
  c.pad = pad;
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
  for (auto& v : c.weight->data) v = static_cast<T>(rng.normal() * std_dev);
  return c;
}

template <typename T>
BatchNorm2d<T> make_batchnorm2d(int ch) {
  BatchNorm2d<T> bn;
  bn.scale = make_tensor<T>({ch}, true);
  bn.shift = make_tensor<T>({ch}, true);
  std::fill(bn.scale->data.begin(), bn.scale->data.end(), T(1));
  bn.running_mean.assign(ch, T(0));
  bn.running_var.assign(ch, T(1));
  return bn;
}

template <typename T>
Linear<T> make_linear(int in_dim, int out_dim, SampleRng& rng) {
  Linear<T> l;
  l.weight = make_tensor<T>({out_dim, in_dim}, true);
  l.bias = make_tensor<T>({out_dim}, true);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (auto& v : l.weight->data) v = static_cast<T>(rng.normal() * std_dev);
  return l;
}

}  // namespace mono::nn
