#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fireline/tensor.hpp"

namespace fireline {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // leaves: allocated iff requires_grad; op outputs: on first use in backward
  bool requires_grad = false;

  void ensure_grad() {
    if (requires_grad && grad.empty()) grad = Tensor<T>(value.shape());
  }
};

/// Shared handle to a tensor that may participate in differentiation.
/// Copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    set_requires_grad(requires_grad);
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    node_->grad = on ? Tensor<T>(node_->value.shape()) : Tensor<T>();
  }
  void zero_grad() {
    if (node_->requires_grad) {
      node_->ensure_grad();
      node_->grad.fill(T{0});
    }
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Records differentiable operations in execution order; backward() replays
/// them in reverse. One tape belongs to one thread.
template <typename T>
class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<std::shared_ptr<Node<T>>> inputs;
    std::shared_ptr<Node<T>> output;
    std::function<void()> backward;
  };

  /// True when an op over `inputs` must be recorded.
  static bool needs_grad(std::initializer_list<const Var<T>*> inputs) {
    for (const Var<T>* v : inputs)
      if (v->requires_grad()) return true;
    return false;
  }

  void record(std::string op, std::vector<std::shared_ptr<Node<T>>> inputs,
              std::shared_ptr<Node<T>> output, std::function<void()> backward) {
    entries_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards once. Leaf
  /// gradients accumulate; call zero_grad on leaves between passes.
  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1)
      throw UsageError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw UsageError("backward: loss does not depend on any parameter");
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T{1};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      it->output->ensure_grad();
      for (auto& in : it->inputs) in->ensure_grad();
      it->backward();
    }
    clear();
  }

 private:
  std::vector<Entry> entries_;
};

/// Creates the output variable of an op. A recorded output requires a
/// gradient, allocated lazily during backward.
template <typename T>
Var<T> make_result(Tensor<T> value, bool track) {
  Var<T> out(std::move(value));
  out.node()->requires_grad = track;
  return out;
}

}  // namespace fireline
