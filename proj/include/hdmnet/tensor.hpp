#pragma once

// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Operations whose
// inputs require gradients record a backward closure on the output node;
// backward() walks the recorded nodes in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hdmnet {

using Shape = std::vector<std::size_t>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration (model layout, scene, training run).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}
}  // namespace detail

/// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
  /// Gradient buffer of input k, or nullptr when that input needs none.
  T* input_grad(std::size_t k) {
    auto& in = *inputs[k];
    return in.requires_grad ? in.grad_buffer().data() : nullptr;
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}, std::vector<T>{T(0)}) {}

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                           std::to_string(shape_numel(shape)) + " elements, got " +
                           std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }

  /// Accumulated gradient; zeros when nothing has been propagated yet.
  std::span<const T> grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
  }

  T item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
  }

  const char* op() const { return node_->op; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Leaf copy of the values, cut from the graph.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape(), std::vector<U>(node_->data.begin(), node_->data.end()));
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <class T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (grad_disabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>* t) { return t->requires_grad(); });
}

/// Wraps forward values into an output tensor, recording the backward rule
/// when any input participates in differentiation.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (any_requires_grad<T>(inputs)) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.op = op;
    for (const auto* in : inputs) node.inputs.push_back(in->node());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

template <class T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs before consumers
}

}  // namespace detail

/// Op tags of the recorded graph feeding `out`, in execution order.
template <class T>
std::vector<std::string> graph_ops(const Tensor<T>& out) {
  std::vector<std::string> ops;
  if (!out.requires_grad()) return ops;
  for (auto* n : detail::topological_order(out.node().get())) ops.emplace_back(n->op);
  return ops;
}

/// Populates d(loss)/d(leaf) for every leaf with requires_grad. Leaf
/// gradients accumulate across calls; call zero_grad() between steps.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  auto order = detail::topological_order(loss.node().get());
  for (auto* n : order) {
    if (n->backward_fn) n->grad.assign(n->data.size(), T(0));
  }
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and structural operations.

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(out), "add", {&a, &b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = self.input_grad(k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<T>(a.shape(), std::move(out), "sub", {&a, &b}, [](Node<T>& self) {
    if (T* g = self.input_grad(0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = self.input_grad(1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto av = a.values();
  auto bv = b.values();
  return detail::make_result<T>(a.shape(), std::move(out), "mul", {&a, &b},
                                [av = std::move(av), bv = std::move(bv)](Node<T>& self) {
                                  if (T* g = self.input_grad(0)) {
                                    for (std::size_t i = 0; i < av.size(); ++i)
                                      g[i] += self.grad[i] * bv[i];
                                  }
                                  if (T* g = self.input_grad(1)) {
                                    for (std::size_t i = 0; i < av.size(); ++i)
                                      g[i] += self.grad[i] * av[i];
                                  }
                                });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result<T>(a.shape(), std::move(out), "scale", {&a},
                                [factor](Node<T>& self) {
                                  if (T* g = self.input_grad(0)) {
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      g[i] += self.grad[i] * factor;
                                  }
                                });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  return detail::make_result<T>(Shape{}, {total}, "sum", {&a}, [](Node<T>& self) {
    if (T* g = self.input_grad(0)) {
      const std::size_t n = self.inputs[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return detail::make_result<T>(std::move(shape), a.values(), "reshape", {&a},
                                [](Node<T>& self) {
                                  if (T* g = self.input_grad(0)) {
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      g[i] += self.grad[i];
                                  }
                                });
}

/// Slice `index` along the leading dimension.
template <class T>
Tensor<T> select(const Tensor<T>& a, std::size_t index) {
  if (a.rank() < 1 || index >= a.dim(0)) {
    throw DimensionError("select index " + std::to_string(index) + " out of range for " +
                         shape_str(a.shape()));
  }
  Shape inner(a.shape().begin() + 1, a.shape().end());
  const std::size_t stride = shape_numel(inner);
  const std::size_t offset = index * stride;
  std::vector<T> out(a.data().begin() + offset, a.data().begin() + offset + stride);
  return detail::make_result<T>(std::move(inner), std::move(out), "select", {&a},
                                [offset](Node<T>& self) {
                                  if (T* g = self.input_grad(0)) {
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      g[offset + i] += self.grad[i];
                                  }
                                });
}

/// Adds `b` to every slice of `a` along the leading dimension.
template <class T>
Tensor<T> add_broadcast_leading(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() + 1 ||
      !std::equal(b.shape().begin(), b.shape().end(), a.shape().begin() + 1)) {
    throw DimensionError("add_broadcast_leading: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t stride = b.numel();
  std::vector<T> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % stride];
  return detail::make_result<T>(a.shape(), std::move(out), "add_broadcast", {&a, &b},
                                [stride](Node<T>& self) {
                                  if (T* g = self.input_grad(0)) {
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      g[i] += self.grad[i];
                                  }
                                  if (T* g = self.input_grad(1)) {
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      g[i % stride] += self.grad[i];
                                  }
                                });
}

/// [N,C,H,W] -> [N,H,W,C].
template <class T>
Tensor<T> nchw_to_nhwc(const Tensor<T>& a) {
  if (a.rank() != 4) throw DimensionError("nchw_to_nhwc expects rank 4, got " + shape_str(a.shape()));
  const std::size_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  std::vector<T> out(a.numel());
  const auto src = a.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          out[((b * h + y) * w + x) * c + ch] = src[((b * c + ch) * h + y) * w + x];
  return detail::make_result<T>(Shape{n, h, w, c}, std::move(out), "nchw_to_nhwc", {&a},
                                [n, c, h, w](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g) return;
                                  for (std::size_t b = 0; b < n; ++b)
                                    for (std::size_t ch = 0; ch < c; ++ch)
                                      for (std::size_t y = 0; y < h; ++y)
                                        for (std::size_t x = 0; x < w; ++x)
                                          g[((b * c + ch) * h + y) * w + x] +=
                                              self.grad[((b * h + y) * w + x) * c + ch];
                                });
}

namespace detail {
template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& a, const char* op, F&& f, D&& dfdx_from_out) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  std::vector<T> saved = out;
  return make_result<T>(a.shape(), std::move(out), op, {&a},
                        [saved = std::move(saved), d = std::forward<D>(dfdx_from_out)](Node<T>& self) {
                          if (T* g = self.input_grad(0)) {
                            for (std::size_t i = 0; i < saved.size(); ++i)
                              g[i] += self.grad[i] * d(saved[i]);
                          }
                        });
}
}  // namespace detail

/// max(x, 0); the subgradient at 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); },
      [](T y) { return y > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(
      a, "tanh", [](T x) { return std::tanh(x); }, [](T y) { return T(1) - y * y; });
}

/// Soft shadow indicator max(tanh(2x), 0).
template <class T>
Tensor<T> soft_threshold(const Tensor<T>& a) {
  return relu(tanh(scale(a, T(2))));
}

template <class T>
Tensor<T> frobenius_norm_sq(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v * v;
  auto saved = a.values();
  return detail::make_result<T>(Shape{}, {total}, "frobenius_norm_sq", {&a},
                                [saved = std::move(saved)](Node<T>& self) {
                                  if (T* g = self.input_grad(0)) {
                                    const T s = T(2) * self.grad[0];
                                    for (std::size_t i = 0; i < saved.size(); ++i) g[i] += s * saved[i];
                                  }
                                });
}

/// sqrt of the sum of squares; the gradient at exactly zero is zero.
template <class T>
Tensor<T> frobenius_norm(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v * v;
  const T norm = std::sqrt(total);
  auto saved = a.values();
  return detail::make_result<T>(Shape{}, {norm}, "frobenius_norm", {&a},
                                [saved = std::move(saved), norm](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g || norm == T(0)) return;
                                  const T s = self.grad[0] / norm;
                                  for (std::size_t i = 0; i < saved.size(); ++i) g[i] += s * saved[i];
                                });
}

}  // namespace hdmnet
