#pragma once

// Differentiable ops. Each takes a Tape pointer; when it is null, or when no
// input requires a gradient, the op runs forward only and records nothing.

#include <cstdint>
#include <memory>
#include <vector>

#include "fireline/autograd.hpp"
#include "fireline/kernels.hpp"

namespace fireline {

enum class Mode { Train, Eval };

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

/// Folds branch decisions of piecewise ops into a hash, so gradient checks
/// can tell when a finite-difference step crossed a kink.
struct BranchTrace {
  std::uint64_t hash = 1469598103934665603ull;
  void mix(std::uint64_t v) { hash = (hash ^ v) * 1099511628211ull; }
};

namespace detail {

template <typename T>
Tensor<T>* grad_of(const std::shared_ptr<Node<T>>& n) {
  return n->requires_grad ? &n->grad : nullptr;
}

template <typename T>
bool tracking(Tape<T>* tape, std::initializer_list<const Var<T>*> inputs) {
  return tape != nullptr && Tape<T>::needs_grad(inputs);
}

}  // namespace detail

inline BranchTrace*& branch_trace_slot() {
  static thread_local BranchTrace* trace = nullptr;
  return trace;
}

/// RAII scope enabling branch tracing on this thread.
class ScopedBranchTrace {
 public:
  explicit ScopedBranchTrace(BranchTrace& trace) { branch_trace_slot() = &trace; }
  ~ScopedBranchTrace() { branch_trace_slot() = nullptr; }
  ScopedBranchTrace(const ScopedBranchTrace&) = delete;
  ScopedBranchTrace& operator=(const ScopedBranchTrace&) = delete;
};

inline BranchTrace* active_branch_trace() { return branch_trace_slot(); }

template <typename T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
              std::size_t stride, std::size_t pad) {
  const bool track = detail::tracking(tape, {&x, &w, &b});
  Var<T> out = make_result(kernels::conv2d_forward(x.value(), w.value(), b.value(), stride, pad),
                           track);
  if (track) {
    auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    tape->record("conv2d", {xn, wn, bn}, on, [=] {
      kernels::conv2d_backward(xn->value, wn->value, on->grad, stride, pad, detail::grad_of(xn),
                               detail::grad_of(wn), detail::grad_of(bn));
    });
  }
  return out;
}

template <typename T>
Var<T> conv_transpose2d(Tape<T>* tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
                        std::size_t stride) {
  const bool track = detail::tracking(tape, {&x, &w, &b});
  Var<T> out = make_result(kernels::conv_transpose2d_forward(x.value(), w.value(), b.value(), stride),
                           track);
  if (track) {
    auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    tape->record("conv_transpose2d", {xn, wn, bn}, on, [=] {
      kernels::conv_transpose2d_backward(xn->value, wn->value, on->grad, stride,
                                         detail::grad_of(xn), detail::grad_of(wn),
                                         detail::grad_of(bn));
    });
  }
  return out;
}

template <typename T>
Var<T> maxpool2d(Tape<T>* tape, const Var<T>& x) {
  const bool track = detail::tracking(tape, {&x});
  BranchTrace* trace = active_branch_trace();
  auto argmax = std::make_shared<std::vector<std::uint32_t>>();
  Var<T> out = make_result(kernels::maxpool2d_forward(x.value(), (track || trace) ? argmax.get() : nullptr),
                           track);
  if (trace)
    for (std::uint32_t i : *argmax) trace->mix(i);
  if (track) {
    auto xn = x.node(), on = out.node();
    tape->record("maxpool2d", {xn}, on,
                 [=] { kernels::maxpool2d_backward(*argmax, on->grad, xn->grad); });
  }
  return out;
}

/// Eval-mode batchnorm: an affine map of the input using running statistics.
template <typename T>
Var<T> batchnorm2d_eval(Tape<T>* tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                        const BatchNormState<T>& state) {
  const bool track = detail::tracking(tape, {&x});
  Var<T> out = make_result(kernels::batchnorm2d_eval_forward(x.value(), gamma.value(), beta.value(),
                                                             state.running_mean, state.running_var),
                           track);
  if (track) {
    auto xn = x.node(), gn = gamma.node(), on = out.node();
    const Tensor<T> running_var = state.running_var;
    tape->record("batchnorm2d_eval", {xn}, on, [=] {
      const std::size_t n_ = xn->value.dim(0), c_ = xn->value.dim(1);
      const std::size_t hw = xn->value.dim(2) * xn->value.dim(3);
      for (std::size_t c = 0; c < c_; ++c) {
        const T scale =
            gn->value[c] / std::sqrt(running_var[c] + static_cast<T>(kernels::kBatchNormEps));
        for (std::size_t n = 0; n < n_; ++n)
          for (std::size_t i = 0; i < hw; ++i)
            xn->grad[(n * c_ + c) * hw + i] += scale * on->grad[(n * c_ + c) * hw + i];
      }
    });
  }
  return out;
}

/// Train mode normalizes with batch statistics and updates `state`.
template <typename T>
Var<T> batchnorm2d(Tape<T>* tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   BatchNormState<T>& state, Mode mode) {
  if (mode == Mode::Eval) return batchnorm2d_eval(tape, x, gamma, beta, state);
  const bool track = detail::tracking(tape, {&x, &gamma, &beta});
  auto stats = std::make_shared<kernels::BatchNormStats<T>>();
  Var<T> out = make_result(kernels::batchnorm2d_train_forward(x.value(), gamma.value(), beta.value(),
                                                              state.running_mean, state.running_var,
                                                              *stats),
                           track);
  if (track) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    tape->record("batchnorm2d", {xn, gn, bn}, on, [=] {
      kernels::batchnorm2d_backward(xn->value, gn->value, *stats, on->grad, detail::grad_of(xn),
                                    detail::grad_of(gn), detail::grad_of(bn));
    });
  }
  return out;
}

template <typename T>
Var<T> leaky_relu(Tape<T>* tape, const Var<T>& x) {
  const bool track = detail::tracking(tape, {&x});
  if (BranchTrace* trace = active_branch_trace())
    for (std::size_t i = 0; i < x.value().size(); ++i) trace->mix(x.value()[i] >= T{0} ? 2 * i : 2 * i + 1);
  Var<T> out = make_result(kernels::map(x.value(), [](T v) { return kernels::leaky_relu(v); }), track);
  if (track) {
    auto xn = x.node(), on = out.node();
    tape->record("leaky_relu", {xn}, on, [=] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += on->grad[i] * kernels::leaky_relu_grad(xn->value[i]);
    });
  }
  return out;
}

template <typename T>
Var<T> hard_sigmoid(Tape<T>* tape, const Var<T>& x) {
  const bool track = detail::tracking(tape, {&x});
  if (BranchTrace* trace = active_branch_trace())
    for (std::size_t i = 0; i < x.value().size(); ++i) {
      const T v = x.value()[i];
      trace->mix(3 * i + (v <= T(-2.5) ? 0 : v >= T(2.5) ? 1 : 2));
    }
  Var<T> out = make_result(kernels::map(x.value(), [](T v) { return kernels::hard_sigmoid(v); }), track);
  if (track) {
    auto xn = x.node(), on = out.node();
    tape->record("hard_sigmoid", {xn}, on, [=] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += on->grad[i] * kernels::hard_sigmoid_grad(xn->value[i]);
    });
  }
  return out;
}

template <typename T>
Var<T> concat_channels(Tape<T>* tape, const std::vector<Var<T>>& xs) {
  std::vector<const Tensor<T>*> values;
  bool track = false;
  for (const auto& v : xs) {
    values.push_back(&v.value());
    track = track || (tape && v.requires_grad());
  }
  Var<T> out = make_result(kernels::concat_channels_forward(values), track);
  if (track) {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& v : xs) nodes.push_back(v.node());
    auto on = out.node();
    tape->record("concat_channels", nodes, on, [=] {
      std::size_t c0 = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) kernels::channel_slice_add(on->grad, c0, n->grad);
        c0 += n->value.dim(1);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  const bool track = detail::tracking(tape, {&a, &b});
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  Var<T> out = make_result(std::move(y), track);
  if (track) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record("add", {an, bn}, on, [=] {
      for (const auto& n : {an, bn})
        if (n->requires_grad)
          for (std::size_t i = 0; i < on->grad.size(); ++i) n->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <typename T>
Var<T> mul(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  const bool track = detail::tracking(tape, {&a, &b});
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  Var<T> out = make_result(std::move(y), track);
  if (track) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record("mul", {an, bn}, on, [=] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (an->requires_grad) an->grad[i] += on->grad[i] * bn->value[i];
        if (bn->requires_grad) bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

/// Sum of all elements as a [1] tensor.
template <typename T>
Var<T> sum(Tape<T>* tape, const Var<T>& x) {
  const bool track = detail::tracking(tape, {&x});
  Var<T> out = make_result(Tensor<T>({1}, static_cast<T>(exact_sum(x.value().data()))), track);
  if (track) {
    auto xn = x.node(), on = out.node();
    tape->record("sum", {xn}, on, [=] {
      for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[0];
    });
  }
  return out;
}

}  // namespace fireline
