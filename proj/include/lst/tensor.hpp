#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include "lst/common.hpp"
#include "lst/rng.hpp"

namespace lst {

namespace detail {
inline std::atomic<uint64_t>& seq_counter() {
  static std::atomic<uint64_t> c{0};
  return c;
}
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables tape recording in a scope (evaluation / data paths).
struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled(); }

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward touches this node
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; consumers always have a larger seq
  std::vector<std::shared_ptr<TensorImpl<T>>> parents;
  std::function<void(const TensorImpl<T>&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

// Dense n-dimensional array participating in reverse-mode differentiation.
// Value handle: copies share the underlying node. Values are treated as
// immutable once a downstream op has consumed them; parameters are mutated
// only between tape constructions (optimizer steps).
template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<int64_t>(data.size())) {
      throw DimensionError("Tensor::from: shape " + shape_str(shape) + " wants " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(data.size()));
    }
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->value = std::move(data);
    t.impl_->requires_grad = requires_grad;
    t.impl_->seq = detail::seq_counter().fetch_add(1) + 1;
    return t;
  }

  static Tensor full(const Shape& shape, T v, bool requires_grad = false) {
    return from(shape, std::vector<T>(static_cast<size_t>(numel(shape)), v), requires_grad);
  }
  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return full(shape, T(0), requires_grad);
  }
  static Tensor ones(const Shape& shape, bool requires_grad = false) {
    return full(shape, T(1), requires_grad);
  }
  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, std::vector<T>{v}, requires_grad);
  }

  static Tensor randu(const Shape& shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
    std::vector<T> d(static_cast<size_t>(numel(shape)));
    for (auto& x : d) x = static_cast<T>(rng.uniform(lo, hi));
    return from(shape, std::move(d), requires_grad);
  }

  static Tensor randn(const Shape& shape, Rng& rng, T mean = T(0), T stddev = T(1),
                      bool requires_grad = false) {
    std::vector<T> d(static_cast<size_t>(numel(shape)));
    for (auto& x : d) x = static_cast<T>(mean + stddev * rng.normal());
    return from(shape, std::move(d), requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  size_t size() const { return impl_->value.size(); }

  std::span<const T> data() const { return impl_->value; }
  // Direct writes are reserved for leaves (parameters, input staging).
  std::span<T> mutable_data() { return impl_->value; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) {
      throw ContractError("Tensor::item: tensor has " + std::to_string(size()) +
                          " elements, expected scalar");
    }
    return impl_->value[0];
  }

  T operator[](size_t i) const { return impl_->value[i]; }

  std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }

  // Creates the output node of an op. `fn` receives the finished output node
  // and accumulates into the parents' grad buffers. Recording is skipped when
  // grads are disabled or no parent needs them, so evaluation builds no graph.
  static Tensor make_op(Shape shape, std::vector<T> value, std::vector<Tensor> inputs,
                        std::function<void(const TensorImpl<T>&)> fn) {
    Tensor out = from(std::move(shape), std::move(value), false);
    bool need = false;
    if (grad_enabled()) {
      for (const auto& in : inputs) {
        if (in.impl_ && (in.impl_->requires_grad || in.impl_->backward_fn)) {
          need = true;
          break;
        }
      }
    }
    if (need) {
      out.impl_->requires_grad = true;
      out.impl_->parents.reserve(inputs.size());
      for (auto& in : inputs) out.impl_->parents.push_back(in.impl_);
      out.impl_->backward_fn = std::move(fn);
    }
    return out;
  }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

// The ordered record of differentiable operations reachable from one root.
// Creation order (seq) gives a topological order: replaying backward in
// reverse creation order visits each op exactly once, with every consumer
// finishing before its producer runs.
template <class T>
class Tape {
 public:
  static Tape trace(const Tensor<T>& root) {
    Tape tape;
    tape.root_ = root.impl();
    std::unordered_set<const TensorImpl<T>*> seen;
    std::vector<std::shared_ptr<TensorImpl<T>>> stack{root.impl()};
    seen.insert(root.impl().get());
    while (!stack.empty()) {
      auto node = std::move(stack.back());
      stack.pop_back();
      for (auto& p : node->parents) {
        if (seen.insert(p.get()).second) stack.push_back(p);
      }
      tape.nodes_.push_back(std::move(node));
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const auto& a, const auto& b) { return a->seq > b->seq; });
    return tape;
  }

  // Seeds d(root)/d(root) = 1 and sweeps the record once.
  void backward() {
    root_->ensure_grad();
    std::fill(root_->grad.begin(), root_->grad.end(), T(0));
    root_->grad[0] = T(1);
    for (auto& node : nodes_) {
      if (!node->backward_fn) continue;
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }

  size_t op_count() const {
    size_t n = 0;
    for (const auto& node : nodes_)
      if (node->backward_fn) ++n;
    return n;
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  std::shared_ptr<TensorImpl<T>> root_;
  std::vector<std::shared_ptr<TensorImpl<T>>> nodes_;
};

// Populates grads of every requires_grad ancestor of `loss`. Gradients
// accumulate additively, both across multiple uses of a tensor within the
// graph and across repeated backward calls.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  }
  Tape<T>::trace(loss).backward();
}

}  // namespace lst
