#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "fireline/autograd.hpp"

namespace fireline {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double numeric_floor = 1e-8;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (!(0 < beta1 && beta1 < beta2 && beta2 < 1))
      throw ConfigError("Adam betas must satisfy 0 < beta1 < beta2 < 1");
    if (weight_decay != 0.0) throw ConfigError("weight decay is not supported (must be 0)");
    if (!(numeric_floor > 0)) throw ConfigError("Adam numeric floor must be positive");
  }
};

template <typename T>
struct AdamMoments {
  Tensor<T> m;
  Tensor<T> v;
};

/// One bias-corrected Adam update of `param` in place. `step` counts from 1.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, AdamMoments<T>& state,
                 const AdamConfig& cfg, long step, double learning_rate,
                 const std::string& name = "parameter") {
  if (step < 1) throw UsageError("adam step index must be >= 1");
  if (grad.shape() != param.shape())
    throw ShapeError("adam: gradient of '" + name + "' has shape " + shape_str(grad.shape()) +
                     ", parameter has " + shape_str(param.shape()));
  if (!grad.all_finite()) throw NumericError("adam: non-finite gradient for '" + name + "'");
  if (state.m.empty()) {
    state.m = Tensor<T>(param.shape());
    state.v = Tensor<T>(param.shape());
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    param[i] -= static_cast<T>(learning_rate * mhat / (std::sqrt(vhat) + cfg.numeric_floor));
  }
}

/// Adam over a set of named parameters.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return step_; }

  void step(std::map<std::string, Var<T>>& params, double learning_rate) {
    ++step_;
    for (auto& [name, p] : params) {
      if (!p.requires_grad()) continue;
      adam_update(p.mutable_value(), p.grad(), moments_[name], cfg_, step_, learning_rate, name);
    }
  }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::map<std::string, AdamMoments<T>> moments_;
};

/// Halves the learning rate after `patience` consecutive epochs without
/// validation-loss improvement.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double initial_lr, double factor = 0.5, int patience = 10,
                            double min_delta = 1e-6)
      : lr_(initial_lr), factor_(factor), patience_(patience), min_delta_(min_delta) {
    if (!(initial_lr > 0)) throw ConfigError("initial learning rate must be positive");
    if (!(factor > 0 && factor < 1)) throw ConfigError("plateau factor must lie in (0, 1)");
    if (patience < 1) throw ConfigError("plateau patience must be >= 1");
    if (!(min_delta >= 0)) throw ConfigError("plateau min_delta must be >= 0");
  }

  /// Returns true if this call reduced the learning rate.
  bool update(double val_loss) {
    if (std::isnan(val_loss)) throw NumericError("scheduler: validation loss is NaN");
    ++epoch_;
    if (val_loss < best_ - min_delta_) {
      best_ = val_loss;
      since_improvement_ = 0;
      return false;
    }
    if (++since_improvement_ >= patience_) {
      lr_ *= factor_;
      since_improvement_ = 0;
      ++reductions_;
      return true;
    }
    return false;
  }

  double learning_rate() const { return lr_; }
  double best() const { return best_; }
  int epochs_since_improvement() const { return since_improvement_; }
  int reductions() const { return reductions_; }
  int epochs_seen() const { return epoch_; }
  double factor() const { return factor_; }
  int patience() const { return patience_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
  int reductions_ = 0;
  int epoch_ = 0;
};

}  // namespace fireline
