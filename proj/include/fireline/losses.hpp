#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "fireline/autograd.hpp"
#include "fireline/ops.hpp"

namespace fireline {

enum class LossKind { Dice, Bce };

struct LossConfig {
  LossKind kind = LossKind::Dice;
  double epsilon = 1.0;  // dice smoothing, denominator only

  void validate() const {
    if (!(epsilon > 0.0))
      throw ConfigError("dice epsilon must be positive, got " + std::to_string(epsilon));
  }
};

inline std::string to_string(LossKind k) { return k == LossKind::Dice ? "dice" : "bce"; }
inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "dice") return LossKind::Dice;
  if (s == "bce") return LossKind::Bce;
  throw ConfigError("unknown loss '" + s + "' (expected dice or bce)");
}

inline constexpr double kBceClamp = 1e-7;

namespace detail {
inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw ShapeError(std::string(op) + ": prediction " + shape_str(a) + " and truth " +
                     shape_str(b) + " differ");
}
}  // namespace detail

/// Smooth negative dice coefficient:
///   L = -2 sum(s*r) / (sum(s) + sum(r) + eps)
/// over every element of the batch. Value lies in (-1, 0].
template <typename T>
Var<T> dice_loss(Tape<T>* tape, const Var<T>& pred, const Tensor<T>& truth, double epsilon = 1.0) {
  detail::require_same_shape(pred.shape(), truth.shape(), "dice_loss");
  if (!(epsilon > 0.0)) throw ConfigError("dice_loss: epsilon must be positive");
  using A = acc_t<T>;
  KahanSum<A> inter, s_sum, r_sum;
  const Tensor<T>& s = pred.value();
  for (std::size_t i = 0; i < s.size(); ++i) {
    inter.add(static_cast<A>(s[i]) * static_cast<A>(truth[i]));
    s_sum.add(s[i]);
    r_sum.add(truth[i]);
  }
  const A num = inter.value();
  const A den = s_sum.value() + r_sum.value() + static_cast<A>(epsilon);
  const bool track = detail::tracking(tape, {&pred});
  Var<T> out = make_result(Tensor<T>({1}, static_cast<T>(-2 * num / den)), track);
  if (track) {
    auto pn = pred.node(), on = out.node();
    auto r = std::make_shared<Tensor<T>>(truth);
    tape->record("dice_loss", {pn}, on, [=] {
      // dL/ds_i = -2 (r_i * den - num) / den^2
      const A g = on->grad[0];
      for (std::size_t i = 0; i < pn->grad.size(); ++i)
        pn->grad[i] += static_cast<T>(g * -2 * (static_cast<A>((*r)[i]) * den - num) / (den * den));
    });
  }
  return out;
}

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
template <typename T>
Var<T> bce_loss(Tape<T>* tape, const Var<T>& pred, const Tensor<T>& truth) {
  detail::require_same_shape(pred.shape(), truth.shape(), "bce_loss");
  using A = acc_t<T>;
  const A lo = kBceClamp, hi = 1 - kBceClamp;
  const Tensor<T>& s = pred.value();
  KahanSum<A> total;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const A p = std::clamp<A>(s[i], lo, hi);
    const A r = truth[i];
    total.add(-(r * std::log(p) + (1 - r) * std::log(1 - p)));
  }
  const A n = static_cast<A>(s.size());
  const bool track = detail::tracking(tape, {&pred});
  Var<T> out = make_result(Tensor<T>({1}, static_cast<T>(total.value() / n)), track);
  if (track) {
    auto pn = pred.node(), on = out.node();
    auto rt = std::make_shared<Tensor<T>>(truth);
    tape->record("bce_loss", {pn}, on, [=] {
      const A g = on->grad[0];
      for (std::size_t i = 0; i < pn->grad.size(); ++i) {
        const A v = pn->value[i];
        if (v <= lo || v >= hi) continue;  // clamped: flat
        const A r = (*rt)[i];
        pn->grad[i] += static_cast<T>(g * (-(r / v) + (1 - r) / (1 - v)) / n);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> compute_loss(Tape<T>* tape, const Var<T>& pred, const Tensor<T>& truth,
                    const LossConfig& cfg) {
  return cfg.kind == LossKind::Dice ? dice_loss(tape, pred, truth, cfg.epsilon)
                                    : bce_loss(tape, pred, truth);
}

/// Pixel counts for micro-averaged F1.
struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }

  /// 100 * 2TP / (2TP + FP + FN); 100 when both masks are empty.
  double f1() const {
    const std::uint64_t den = 2 * tp + fp + fn;
    if (den == 0) return 100.0;
    return 100.0 * static_cast<double>(2 * tp) / static_cast<double>(den);
  }
};

inline constexpr double kBinarizeThreshold = 0.5;

template <typename T>
Tensor<T> binarize(const Tensor<T>& soft, double threshold = kBinarizeThreshold) {
  Tensor<T> out(soft.shape());
  for (std::size_t i = 0; i < soft.size(); ++i) out[i] = soft[i] >= threshold ? T{1} : T{0};
  return out;
}

template <typename T>
Confusion confusion(const Tensor<T>& pred_mask, const Tensor<T>& truth) {
  detail::require_same_shape(pred_mask.shape(), truth.shape(), "f1_score");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = pred_mask[i] >= T(0.5), t = truth[i] >= T(0.5);
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// F1 on a 0-100 scale between two binary masks.
template <typename T>
double f1_score(const Tensor<T>& pred_mask, const Tensor<T>& truth) {
  return confusion(pred_mask, truth).f1();
}

}  // namespace fireline
