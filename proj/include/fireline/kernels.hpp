#pragma once

// Raw forward/backward kernels over NCHW tensors. These carry no autograd
// bookkeeping; see ops.hpp for the differentiable wrappers.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fireline/tensor.hpp"

namespace fireline::kernels {

/// Left-to-right sum. Eigen's vectorized reductions peel to the first
/// aligned element, which makes the result depend on the buffer address.
template <typename T>
T ordered_sum(const T* p, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
// Column-major views: a row-major [rows, cols] buffer is a column-major
// [cols, rows] matrix. Eigen's GEMM is faster with a long leading dimension.
template <typename T>
using ColMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>;
template <typename T>
using ConstColMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>;

inline constexpr double kLeakySlope = 0.1;
inline constexpr double kHardSigmoidSlope = 0.2;
inline constexpr double kHardSigmoidEdge = 2.5;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

inline void require_rank4(const Shape& s, const char* op, const char* what) {
  if (s.size() != 4)
    throw ShapeError(std::string(op) + ": " + what + " must be rank 4, got " + shape_str(s));
}

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t stride, pad;
  std::size_t ho, wo;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t out_pixels() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

inline ConvGeometry conv2d_geometry(const Shape& in, const Shape& weight, std::size_t stride,
                                    std::size_t pad) {
  require_rank4(in, "conv2d", "input");
  require_rank4(weight, "conv2d", "weight");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (in[1] != weight[1])
    throw ShapeError("conv2d: input " + shape_str(in) + " has " + std::to_string(in[1]) +
                     " channels but weight " + shape_str(weight) + " expects " +
                     std::to_string(weight[1]));
  ConvGeometry g{in[0], in[1], in[2], in[3], weight[0], weight[2], weight[3], stride, pad, 0, 0};
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw)
    throw ConfigError("conv2d: zero-sized output for input " + shape_str(in) + " and weight " +
                      shape_str(weight) + " with padding " + std::to_string(pad));
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

template <typename T>
std::vector<T>& scratch(std::size_t n) {
  static thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

/// Unfold one [C,H,W] image into a [C*kh*kw, ho*wo] patch matrix.
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* plane = img + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * g.out_pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = plane + iy * w;
          if (g.stride == 1) {
            // valid ox range: 0 <= ox + j - pad < w
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-off, 0, g.wo);
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(w - off, lo, g.wo);
            std::fill(dst, dst + lo, T{0});
            std::copy(src + lo + off, src + hi + off, dst + lo);
            std::fill(dst + hi, dst + g.wo, T{0});
          } else {
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-add a patch matrix back into a [C,H,W] image.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* plane = img + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * g.out_pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + oy * g.wo;
          T* dst = plane + iy * w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::size_t stride, std::size_t pad) {
  const ConvGeometry g = conv2d_geometry(x.shape(), weight.shape(), stride, pad);
  if (bias.size() != g.cout)
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(g.cout) + " output channels");
  Tensor<T> out({g.n, g.cout, g.ho, g.wo});
  const std::size_t k = g.patch();
  const std::size_t p = g.out_pixels();
  // out[Cout][P] = W[Cout][K] * col[K][P], i.e. out' (P x Cout) = col' (P x K) * W' (K x Cout)
  ConstColMap<T> wm(weight.ptr(), k, g.cout);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* img = x.ptr() + n * g.cin * g.h * g.w;
    const T* colp = img;
    if (!g.pointwise()) {
      auto& buf = scratch<T>(k * p);
      im2col(img, g, buf.data());
      colp = buf.data();
    }
    ColMap<T> om(out.ptr() + n * g.cout * p, p, g.cout);
    om.noalias() = ConstColMap<T>(colp, p, k) * wm;
    for (std::size_t o = 0; o < g.cout; ++o) om.col(o).array() += bias[o];
  }
  return out;
}

/// Accumulates gradients into any non-null destination.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                     std::size_t stride, std::size_t pad, Tensor<T>* dx, Tensor<T>* dw,
                     Tensor<T>* db) {
  const ConvGeometry g = conv2d_geometry(x.shape(), weight.shape(), stride, pad);
  const std::size_t k = g.patch();
  const std::size_t p = g.out_pixels();
  ConstColMap<T> wm(weight.ptr(), k, g.cout);
  for (std::size_t n = 0; n < g.n; ++n) {
    ConstColMap<T> dym(dy.ptr() + n * g.cout * p, p, g.cout);
    if (db) {
      for (std::size_t o = 0; o < g.cout; ++o) (*db)[o] += ordered_sum(dym.data() + o * p, p);
    }
    const T* img = x.ptr() + n * g.cin * g.h * g.w;
    const T* colp = img;
    if (!g.pointwise() && dw) {
      auto& buf = scratch<T>(k * p);
      im2col(img, g, buf.data());
      colp = buf.data();
    }
    if (dw) ColMap<T>(dw->ptr(), k, g.cout).noalias() += ConstColMap<T>(colp, p, k).transpose() * dym;
    if (!dx) continue;
    T* dimg = dx->ptr() + n * g.cin * g.h * g.w;
    if (g.pointwise()) {
      ColMap<T>(dimg, p, k).noalias() += dym * wm.transpose();
    } else {
      auto& buf = scratch<T>(k * p);
      ColMap<T>(buf.data(), p, k).noalias() = dym * wm.transpose();
      col2im_add(buf.data(), g, dimg);
    }
  }
}

inline void check_conv_transpose(const Shape& in, const Shape& weight, std::size_t stride) {
  require_rank4(in, "conv_transpose2d", "input");
  require_rank4(weight, "conv_transpose2d", "weight");
  if (stride == 0) throw ConfigError("conv_transpose2d: stride must be positive");
  if (weight[2] != stride || weight[3] != stride)
    throw ConfigError("conv_transpose2d: kernel " + std::to_string(weight[2]) + "x" +
                      std::to_string(weight[3]) + " must equal stride " + std::to_string(stride));
  if (in[1] != weight[0])
    throw ShapeError("conv_transpose2d: input " + shape_str(in) + " has " +
                     std::to_string(in[1]) + " channels but weight " + shape_str(weight) +
                     " expects " + std::to_string(weight[0]));
}

/// Kernel == stride, so every output pixel receives exactly one input pixel.
template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight,
                                   const Tensor<T>& bias, std::size_t stride) {
  check_conv_transpose(x.shape(), weight.shape(), stride);
  const std::size_t n_ = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(1), s = stride, kk = s * s;
  if (bias.size() != cout)
    throw ShapeError("conv_transpose2d: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(cout) + " output channels");
  const std::size_t hw = h * w, ho = h * s, wo = w * s;
  Tensor<T> out({n_, cout, ho, wo});
  ConstMatMap<T> wm(weight.ptr(), cin, cout * kk);
  auto& buf = scratch<T>(cout * kk * hw);
  MatMap<T> ym(buf.data(), cout * kk, hw);
  for (std::size_t n = 0; n < n_; ++n) {
    ym.noalias() = wm.transpose() * ConstMatMap<T>(x.ptr() + n * cin * hw, cin, hw);
    T* dst = out.ptr() + n * cout * ho * wo;
    for (std::size_t o = 0; o < cout; ++o) {
      const T b = bias[o];
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          const T* src = buf.data() + ((o * s + i) * s + j) * hw;
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              dst[(o * ho + y * s + i) * wo + xx * s + j] = src[y * w + xx] + b;
        }
    }
  }
  return out;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                               std::size_t stride, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  check_conv_transpose(x.shape(), weight.shape(), stride);
  const std::size_t n_ = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(1), s = stride, kk = s * s;
  const std::size_t hw = h * w, ho = h * s, wo = w * s;
  ConstMatMap<T> wm(weight.ptr(), cin, cout * kk);
  auto& buf = scratch<T>(cout * kk * hw);
  MatMap<T> gm(buf.data(), cout * kk, hw);
  for (std::size_t n = 0; n < n_; ++n) {
    const T* src = dy.ptr() + n * cout * ho * wo;
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          T* row = buf.data() + ((o * s + i) * s + j) * hw;
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              row[y * w + xx] = src[(o * ho + y * s + i) * wo + xx * s + j];
        }
    if (db) {
      for (std::size_t o = 0; o < cout; ++o) (*db)[o] += ordered_sum(buf.data() + o * kk * hw, kk * hw);
    }
    ConstMatMap<T> xm(x.ptr() + n * cin * hw, cin, hw);
    if (dw) MatMap<T>(dw->ptr(), cin, cout * kk).noalias() += xm * gm.transpose();
    if (dx) MatMap<T>(dx->ptr() + n * cin * hw, cin, hw).noalias() += wm * gm;
  }
}

/// 2x2/stride-2 max pooling. `argmax` (optional) receives the flat input
/// index of each window's maximum; ties go to the first in row-major order.
template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
  require_rank4(x.shape(), "maxpool2d", "input");
  const std::size_t n_ = x.dim(0), c_ = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2)
    throw ConfigError("maxpool2d: spatial extents must be even, got " + shape_str(x.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor<T> out({n_, c_, ho, wo});
  if (argmax) argmax->resize(out.size());
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < n_ * c_; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx, ++k) {
        const std::size_t i0 = base + (2 * y) * w + 2 * xx;
        const std::size_t cand[4] = {i0, i0 + 1, i0 + w, i0 + w + 1};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q)
          if (x[cand[q]] > x[best]) best = cand[q];
        out[k] = x[best];
        if (argmax) (*argmax)[k] = static_cast<std::uint32_t>(best);
      }
  }
  return out;
}

template <typename T>
void maxpool2d_backward(const std::vector<std::uint32_t>& argmax, const Tensor<T>& dy,
                        Tensor<T>& dx) {
  for (std::size_t k = 0; k < dy.size(); ++k) dx[argmax[k]] += dy[k];
}

/// Per-channel batch statistics saved for the backward pass.
template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> invstd;
};

inline std::size_t batchnorm_check(const Shape& x, std::size_t gamma, std::size_t beta) {
  require_rank4(x, "batchnorm2d", "input");
  if (gamma != x[1] || beta != x[1])
    throw ShapeError("batchnorm2d: gamma/beta size does not match " + std::to_string(x[1]) +
                     " channels of " + shape_str(x));
  return x[0] * x[2] * x[3];
}

/// Normalizes with biased batch variance and updates running statistics
/// (running variance uses the unbiased estimate).
template <typename T>
Tensor<T> batchnorm2d_train_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                    const Tensor<T>& beta, Tensor<T>& running_mean,
                                    Tensor<T>& running_var, BatchNormStats<T>& stats) {
  const std::size_t m = batchnorm_check(x.shape(), gamma.size(), beta.size());
  if (m < 2)
    throw UsageError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                     shape_str(x.shape()));
  const std::size_t n_ = x.dim(0), c_ = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  stats.mean.assign(c_, T{0});
  stats.invstd.assign(c_, T{0});
  using A = acc_t<T>;
  for (std::size_t c = 0; c < c_; ++c) {
    A sum = 0;
    for (std::size_t n = 0; n < n_; ++n) {
      const T* p = x.ptr() + (n * c_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += p[i];
    }
    const A mean = sum / static_cast<A>(m);
    A sq = 0;
    for (std::size_t n = 0; n < n_; ++n) {
      const T* p = x.ptr() + (n * c_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const A d = p[i] - mean;
        sq += d * d;
      }
    }
    const A var = sq / static_cast<A>(m);
    const A invstd = A{1} / std::sqrt(var + static_cast<A>(kBatchNormEps));
    stats.mean[c] = static_cast<T>(mean);
    stats.invstd[c] = static_cast<T>(invstd);
    const T scale = static_cast<T>(gamma[c] * invstd);
    const T shift = static_cast<T>(beta[c] - gamma[c] * mean * invstd);
    for (std::size_t n = 0; n < n_; ++n) {
      const T* p = x.ptr() + (n * c_ + c) * hw;
      T* q = out.ptr() + (n * c_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) q[i] = p[i] * scale + shift;
    }
    const A mom = kBatchNormMomentum;
    const A unbiased = sq / static_cast<A>(m - 1);
    running_mean[c] = static_cast<T>((1 - mom) * running_mean[c] + mom * mean);
    running_var[c] = static_cast<T>((1 - mom) * running_var[c] + mom * unbiased);
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm2d_eval_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta, const Tensor<T>& running_mean,
                                   const Tensor<T>& running_var) {
  batchnorm_check(x.shape(), gamma.size(), beta.size());
  const std::size_t n_ = x.dim(0), c_ = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  for (std::size_t c = 0; c < c_; ++c) {
    const T invstd = T{1} / std::sqrt(running_var[c] + static_cast<T>(kBatchNormEps));
    const T scale = gamma[c] * invstd;
    const T shift = beta[c] - running_mean[c] * scale;
    for (std::size_t n = 0; n < n_; ++n) {
      const T* p = x.ptr() + (n * c_ + c) * hw;
      T* q = out.ptr() + (n * c_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) q[i] = p[i] * scale + shift;
    }
  }
  return out;
}

template <typename T>
void batchnorm2d_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                          const BatchNormStats<T>& stats, const Tensor<T>& dy, Tensor<T>* dx,
                          Tensor<T>* dgamma, Tensor<T>* dbeta) {
  const std::size_t n_ = x.dim(0), c_ = x.dim(1), hw = x.dim(2) * x.dim(3);
  using A = acc_t<T>;
  const A m = static_cast<A>(n_ * hw);
  for (std::size_t c = 0; c < c_; ++c) {
    const A mean = stats.mean[c], invstd = stats.invstd[c];
    A sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t n = 0; n < n_; ++n) {
      const T* p = x.ptr() + (n * c_ + c) * hw;
      const T* g = dy.ptr() + (n * c_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * (p[i] - mean) * invstd;
      }
    }
    if (dgamma) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
    if (dbeta) (*dbeta)[c] += static_cast<T>(sum_dy);
    if (!dx) continue;
    const A k = gamma[c] * invstd / m;
    for (std::size_t n = 0; n < n_; ++n) {
      const T* p = x.ptr() + (n * c_ + c) * hw;
      const T* g = dy.ptr() + (n * c_ + c) * hw;
      T* d = dx->ptr() + (n * c_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const A xhat = (p[i] - mean) * invstd;
        d[i] += static_cast<T>(k * (m * g[i] - sum_dy - xhat * sum_dy_xhat));
      }
    }
  }
}

template <typename T>
T leaky_relu(T v) {
  return v >= T{0} ? v : static_cast<T>(kLeakySlope) * v;
}
template <typename T>
T leaky_relu_grad(T v) {
  return v >= T{0} ? T{1} : static_cast<T>(kLeakySlope);
}
template <typename T>
T hard_sigmoid(T v) {
  const T y = static_cast<T>(kHardSigmoidSlope) * v + T(0.5);
  return std::clamp(y, T{0}, T{1});
}
template <typename T>
T hard_sigmoid_grad(T v) {
  const T edge = static_cast<T>(kHardSigmoidEdge);
  return (v > -edge && v < edge) ? static_cast<T>(kHardSigmoidSlope) : T{0};
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

inline Shape concat_shape(const std::vector<const Shape*>& shapes) {
  if (shapes.empty()) throw ConfigError("concat_channels: no inputs");
  const Shape& first = *shapes.front();
  require_rank4(first, "concat_channels", "input 0");
  Shape out = first;
  out[1] = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Shape& s = *shapes[i];
    require_rank4(s, "concat_channels", "input");
    if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3])
      throw ShapeError("concat_channels: input " + std::to_string(i) + " " + shape_str(s) +
                       " disagrees with input 0 " + shape_str(first) + " on N/H/W");
    out[1] += s[1];
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels_forward(const std::vector<const Tensor<T>*>& xs) {
  std::vector<const Shape*> shapes;
  for (const auto* x : xs) shapes.push_back(&x->shape());
  Tensor<T> out(concat_shape(shapes));
  const std::size_t n_ = out.dim(0), c_total = out.dim(1), hw = out.dim(2) * out.dim(3);
  for (std::size_t n = 0; n < n_; ++n) {
    std::size_t c0 = 0;
    for (const auto* x : xs) {
      const std::size_t c = x->dim(1);
      std::copy_n(x->ptr() + n * c * hw, c * hw, out.ptr() + (n * c_total + c0) * hw);
      c0 += c;
    }
  }
  return out;
}

/// Slice channels [c0, c0 + c) of `src` (accumulating) into `dst`.
template <typename T>
void channel_slice_add(const Tensor<T>& src, std::size_t c0, Tensor<T>& dst) {
  const std::size_t n_ = src.dim(0), c_total = src.dim(1), hw = src.dim(2) * src.dim(3);
  const std::size_t c = dst.dim(1);
  for (std::size_t n = 0; n < n_; ++n) {
    const T* s = src.ptr() + (n * c_total + c0) * hw;
    T* d = dst.ptr() + n * c * hw;
    for (std::size_t i = 0; i < c * hw; ++i) d[i] += s[i];
  }
}

}  // namespace fireline::kernels
