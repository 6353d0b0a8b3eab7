#pragma once

// Central finite-difference gradient oracle. Test-only: rebuilds the forward
// pass from scratch for every probe so it stays independent of the tape.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mono/nn/tensor.hpp"

namespace gradcheck {

struct Result {
  double max_rel_err = 0.0;
  std::string where;
};

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
  return std::fabs(analytic - numeric) / denom;
}

// `loss_fn` must recompute the scalar loss from the current contents of
// `leaves` (fresh graph each call). Grads are checked element by element with
// perturbation h.
inline Result check_gradients(const std::function<mono::nn::TensorPtr<double>()>& loss_fn,
                              const std::vector<mono::nn::TensorPtr<double>>& leaves,
                              double h = 1e-5) {
  using mono::nn::backward;
  for (const auto& lf : leaves) {
    lf->ensure_grad();
    lf->zero_grad();
  }
  auto loss = loss_fn();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& lf : leaves) analytic.push_back(lf->grad);

  Result r;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = *leaves[li];
    for (size_t i = 0; i < leaf.data.size(); ++i) {
      const double saved = leaf.data[i];
      leaf.data[i] = saved + h;
      const double fp = loss_fn()->data[0];
      leaf.data[i] = saved - h;
      const double fm = loss_fn()->data[0];
      leaf.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double e = rel_err(analytic[li][i], numeric);
      if (e > r.max_rel_err) {
        r.max_rel_err = e;
        r.where = "leaf " + std::to_string(li) + " elem " + std::to_string(i) + " analytic " +
                  std::to_string(analytic[li][i]) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace gradcheck
