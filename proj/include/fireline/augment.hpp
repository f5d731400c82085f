#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fireline/rng.hpp"
#include "fireline/tensor.hpp"

namespace fireline {

struct AugmentConfig {
  double apply_probability = 0.10;  // one gate for the whole geometric + noise bundle
  double scale_min = 1.0 / 1.05;
  double scale_max = 1.0;
  double rotation_deg = 10.0;
  double flip_probability = 0.5;  // horizontal, within the bundle
  double shear_deg = 5.0;
  double salt_pepper_density = 0.005;

  // Feedback masks, each independently.
  double empty_mask_probability = 0.05;
  double small_perturb_probability = 0.10;
  double small_translate_px = 2.0;
  double small_rotate_deg = 2.0;
  double large_perturb_probability = 0.02;
  double large_translate_fraction = 0.25;  // of the image height

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0 && p <= 1)) throw ConfigError(std::string("augment: ") + name + " must lie in [0, 1]");
    };
    prob(apply_probability, "apply_probability");
    prob(flip_probability, "flip_probability");
    prob(salt_pepper_density, "salt_pepper_density");
    prob(empty_mask_probability, "empty_mask_probability");
    prob(small_perturb_probability, "small_perturb_probability");
    prob(large_perturb_probability, "large_perturb_probability");
    prob(large_translate_fraction, "large_translate_fraction");
    if (empty_mask_probability + small_perturb_probability + large_perturb_probability > 1)
      throw ConfigError("augment: feedback-mask probabilities sum above 1");
    if (!(scale_min > 0 && scale_min <= scale_max)) throw ConfigError("augment: need 0 < scale_min <= scale_max");
    if (!(rotation_deg >= 0 && rotation_deg <= 180)) throw ConfigError("augment: rotation_deg must lie in [0, 180]");
    if (!(shear_deg >= 0 && shear_deg < 45)) throw ConfigError("augment: shear_deg must lie in [0, 45)");
    if (!(small_translate_px >= 0 && small_rotate_deg >= 0))
      throw ConfigError("augment: perturbation ranges must be nonnegative");
  }

  /// Everything disabled.
  static AugmentConfig none() {
    AugmentConfig c;
    c.apply_probability = 0;
    c.empty_mask_probability = 0;
    c.small_perturb_probability = 0;
    c.large_perturb_probability = 0;
    return c;
  }

  bool operator==(const AugmentConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AugmentConfig, apply_probability, scale_min, scale_max, rotation_deg,
                                   flip_probability, shear_deg, salt_pepper_density,
                                   empty_mask_probability, small_perturb_probability,
                                   small_translate_px, small_rotate_deg, large_perturb_probability,
                                   large_translate_fraction)

/// 2x3 affine map about the image centre, output -> source.
struct Affine {
  std::array<double, 4> m{1, 0, 0, 1};  // row-major 2x2
  double tx = 0, ty = 0;

  static Affine identity() { return {}; }

  /// Forward transform = R(theta) * Shear(phi) * S(scale) * Flip, plus a
  /// translation; stored as its inverse so every output pixel samples a source.
  static Affine inverse_of(double scale, double theta_rad, double shear_rad, bool flip, double dx, double dy) {
    const double c = std::cos(theta_rad), s = std::sin(theta_rad), k = std::tan(shear_rad);
    const double f = flip ? -1.0 : 1.0;
    // R * Sh * S * F with Sh = [[1, k], [0, 1]], S = scale * I, F = diag(f, 1).
    const double a = scale * f * c, b = scale * (c * k - s);
    const double cc = scale * f * s, d = scale * (s * k + c);
    const double det = a * d - b * cc;
    Affine inv;
    inv.m = {d / det, -b / det, -cc / det, a / det};
    // forward: p' = A (p - ctr) + ctr + t  ->  p = A^-1 (p' - ctr - t) + ctr
    inv.tx = -(inv.m[0] * dx + inv.m[1] * dy);
    inv.ty = -(inv.m[2] * dx + inv.m[3] * dy);
    return inv;
  }
};

namespace augment_detail {

inline bool source(const Affine& a, std::size_t h, std::size_t w, std::size_t x, std::size_t y, double& sx,
                   double& sy) {
  const double cx = (static_cast<double>(w) - 1) / 2, cy = (static_cast<double>(h) - 1) / 2;
  const double px = static_cast<double>(x) - cx, py = static_cast<double>(y) - cy;
  sx = a.m[0] * px + a.m[1] * py + a.tx + cx;
  sy = a.m[2] * px + a.m[3] * py + a.ty + cy;
  return sx >= 0 && sy >= 0 && sx <= static_cast<double>(w) - 1 && sy <= static_cast<double>(h) - 1;
}

}  // namespace augment_detail

/// Bilinear resampling; samples outside the source read as 0.
template <typename T>
Tensor<T> warp_bilinear(const Tensor<T>& img, const Affine& a) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor<T> out(img.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double sx, sy;
      if (!augment_detail::source(a, h, w, x, y, sx, sy)) continue;
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = img.ptr() + ch * h * w;
        const double v = (1 - fy) * ((1 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1]) +
                         fy * ((1 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1]);
        out[ch * h * w + y * w + x] = static_cast<T>(v);
      }
    }
  return out;
}

/// Nearest-neighbour resampling, so binary masks stay binary. Uses the same
/// in-bounds rule as warp_bilinear.
template <typename T>
Tensor<T> warp_nearest(const Tensor<T>& img, const Affine& a) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor<T> out(img.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double sx, sy;
      if (!augment_detail::source(a, h, w, x, y, sx, sy)) continue;
      const auto xi = static_cast<std::size_t>(std::lround(sx)), yi = static_cast<std::size_t>(std::lround(sy));
      for (std::size_t ch = 0; ch < c; ++ch) out[ch * h * w + y * w + x] = img[ch * h * w + yi * w + xi];
    }
  return out;
}

template <typename T>
struct Augmented {
  Tensor<T> frame;
  Tensor<T> mask;
  std::vector<Tensor<T>> feedback;
  bool geometric = false;  // the bundle gate fired
};

namespace augment_detail {

inline double radians(double deg) { return deg * std::numbers::pi / 180.0; }

template <typename T>
void salt_and_pepper(Tensor<T>& frame, double density, Rng& rng) {
  const std::size_t n = frame.size();
  const auto count = static_cast<std::size_t>(std::llround(density * static_cast<double>(n)));
  for (std::size_t k = 0; k < count; ++k) frame[rng.below(n)] = k < count / 2 ? T{1} : T{0};
}

}  // namespace augment_detail

/// Training-time augmentation of one sample. Frame, mask, and feedback
/// masks are [1, H, W]. The random draws depend only on the config and rng.
template <typename T>
Augmented<T> augment(const Tensor<T>& frame, const Tensor<T>& mask, const std::vector<Tensor<T>>& feedback,
                     const AugmentConfig& cfg, Rng& rng) {
  using namespace augment_detail;
  if (frame.rank() != 3 || mask.shape() != frame.shape())
    throw ShapeError("augment: frame " + shape_str(frame.shape()) + " and mask " + shape_str(mask.shape()) +
                     " must share a [C, H, W] shape");
  for (std::size_t i = 0; i < feedback.size(); ++i)
    if (feedback[i].shape() != mask.shape())
      throw ShapeError("augment: feedback mask " + std::to_string(i) + " has shape " +
                       shape_str(feedback[i].shape()) + ", expected " + shape_str(mask.shape()));

  Augmented<T> out{frame, mask, feedback, false};
  if (rng.uniform() < cfg.apply_probability) {
    out.geometric = true;
    const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double theta = radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg));
    const double shear = radians(rng.uniform(-cfg.shear_deg, cfg.shear_deg));
    const bool flip = rng.uniform() < cfg.flip_probability;
    const Affine a = Affine::inverse_of(scale, theta, shear, flip, 0, 0);
    out.frame = warp_bilinear(frame, a);
    out.mask = warp_nearest(mask, a);
    for (auto& f : out.feedback) f = warp_nearest(f, a);
    salt_and_pepper(out.frame, cfg.salt_pepper_density, rng);
  }

  const double h = static_cast<double>(mask.dim(1));
  for (auto& f : out.feedback) {
    const double u = rng.uniform();
    if (u < cfg.empty_mask_probability) {
      f.fill(T{0});
    } else if (u < cfg.empty_mask_probability + cfg.large_perturb_probability) {
      const double r = cfg.large_translate_fraction * h;
      f = warp_nearest(f, Affine::inverse_of(1, 0, 0, false, rng.uniform(-r, r), rng.uniform(-r, r)));
    } else if (u < cfg.empty_mask_probability + cfg.large_perturb_probability + cfg.small_perturb_probability) {
      const double t = cfg.small_translate_px;
      const double dx = rng.uniform(-t, t), dy = rng.uniform(-t, t);
      const double theta = radians(rng.uniform(-cfg.small_rotate_deg, cfg.small_rotate_deg));
      f = warp_nearest(f, Affine::inverse_of(1, theta, 0, false, dx, dy));
    }
  }
  return out;
}

}  // namespace fireline
