#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "mono/error.hpp"

namespace mono::nn {

template <typename T>
class Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

inline int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

// Dense tensor plus reverse-mode tape node. Ops are free functions that fill
// in `parents` and `backward_fn` on their outputs whenever gradient has to
// flow (on_tape). `requires_grad` marks leaves whose grad buffers accumulate
// across backward() calls; intermediate grads are scratch zeroed per call.
template <typename T>
class Tensor {
 public:
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool on_tape = false;

  std::vector<TensorPtr<T>> parents;
  std::function<void(Tensor<T>&)> backward_fn;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, bool req_grad = false)
      : shape(std::move(s)), requires_grad(req_grad), on_tape(req_grad) {
    for (int d : shape)
      if (d <= 0) throw ShapeError("tensor dim must be positive, got shape " + shape_str(shape));
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    if (requires_grad) grad.assign(data.size(), T(0));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  // Drops tape edges; keeps values. Used when recycling a graph output as a
  // plain input.
  void detach() {
    parents.clear();
    backward_fn = nullptr;
    on_tape = requires_grad;
  }
};

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), requires_grad);
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>(std::move(shape), requires_grad);
  if (static_cast<int64_t>(values.size()) != t->numel())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(t->shape));
  t->data = std::move(values);
  return t;
}

// Reverse-mode sweep from a scalar loss. Accumulates into every reachable
// requires_grad leaf; calling twice without zeroing doubles leaf grads.
template <typename T>
void backward(const TensorPtr<T>& loss) {
  if (!loss) throw ValidationError("backward: null loss tensor");
  if (loss->numel() != 1)
    throw ValidationError("backward: loss must be scalar, got shape " + shape_str(loss->shape));

  // Iterative post-order DFS over tape parents.
  std::vector<Tensor<T>*> order;
  std::unordered_set<Tensor<T>*> visited;
  std::vector<std::pair<Tensor<T>*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Tensor<T>* p = node->parents[next_child++].get();
      if (p->on_tape && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Tensor<T>* node : order) {
    if (node->requires_grad) {
      node->ensure_grad();  // leaves keep accumulated values
    } else {
      node->grad.assign(node->data.size(), T(0));  // scratch per sweep
    }
  }

  loss->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

}  // namespace mono::nn
