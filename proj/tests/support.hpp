#pragma once

// Shared test helpers: finite-difference gradient checks and direct-loop
// reference kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fireline/fireline.hpp"

namespace fireline::testing {

template <typename T>
Tensor<T> random_tensor(const Shape& s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline Tensor<double> random_binary(const Shape& s, Rng& rng, double p = 0.5) {
  Tensor<double> t(s);
  for (auto& v : t.data()) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return t;
}

struct GradCheckStats {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // finite-difference step crossed a kink
};

inline constexpr double kFdStep = 1e-5;
// Relative error is |a - n| / max(|a|, |n|, floor). Below the floor both
// gradients are indistinguishable from zero at this step size.
inline constexpr double kRelErrorFloor = 1e-4;

/// Compares tape gradients of `loss_fn` with central differences on up to
/// `per_leaf` random coordinates of every leaf.
inline GradCheckStats grad_check(std::vector<Var<double>> leaves,
                                 const std::function<Var<double>(Tape<double>*)>& loss_fn, Rng& rng,
                                 std::size_t per_leaf = 12, double h = kFdStep) {
  GradCheckStats st;
  for (auto& l : leaves) l.zero_grad();
  Tape<double> tape;
  Var<double> loss = loss_fn(&tape);
  tape.backward(loss);
  std::vector<Tensor<double>> analytic;
  for (auto& l : leaves) analytic.push_back(l.grad());

  auto eval = [&](std::uint64_t& hash) {
    BranchTrace trace;
    ScopedBranchTrace scope(trace);
    const double v = loss_fn(nullptr).value()[0];
    hash = trace.hash;
    return v;
  };
  std::uint64_t base_hash;
  eval(base_hash);

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& x = leaves[li].mutable_value();
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(std::min(per_leaf, idx.size()));
    for (std::size_t i : idx) {
      const double orig = x[i];
      std::uint64_t hp, hm;
      x[i] = orig + h;
      const double fp = eval(hp);
      x[i] = orig - h;
      const double fm = eval(hm);
      x[i] = orig;
      if (hp != base_hash || hm != base_hash) {
        ++st.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[li][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kRelErrorFloor});
      st.max_rel_error = std::max(st.max_rel_error, rel);
      ++st.checked;
    }
  }
  return st;
}

/// sum(y * r) for a fixed random r: a scalar whose gradient reaches every
/// output element with O(1) weight.
inline Var<double> projection_loss(Tape<double>* tape, const Var<double>& y, const Tensor<double>& r) {
  return sum(tape, mul(tape, y, Var<double>(r)));
}

/// Direct-loop convolution, cross-correlation with zero padding.
inline Tensor<double> reference_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                       std::size_t stride, std::size_t pad) {
  const std::size_t n_ = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> out({n_, cout, ho, wo});
  for (std::size_t n = 0; n < n_; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx) {
          double s = b[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long sy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                const long sx = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) continue;
                s += x.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) * w.at(o, c, i, j);
              }
          out.at(n, o, y, xx) = s;
        }
  return out;
}

/// Direct-loop transposed convolution with kernel == stride.
inline Tensor<double> reference_conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w,
                                                 const Tensor<double>& b, std::size_t s) {
  const std::size_t n_ = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3), cout = w.dim(1);
  Tensor<double> out({n_, cout, h * s, wd * s});
  for (std::size_t n = 0; n < n_; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < h * s; ++y)
        for (std::size_t xx = 0; xx < wd * s; ++xx) {
          double v = b[o];
          for (std::size_t c = 0; c < cin; ++c) v += x.at(n, c, y / s, xx / s) * w.at(c, o, y % s, xx % s);
          out.at(n, o, y, xx) = v;
        }
  return out;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fireline::testing
