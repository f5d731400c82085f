#pragma once

// Finite-difference checks for every differentiable op, each over a batch of
// random small instances in double precision.

#include <cmath>
#include <string>
#include <vector>

#include "support.hpp"

namespace fireline::testing {

struct OpGradReport {
  std::string op;
  int instances = 0;
  GradCheckStats stats;
};

inline void merge_into(GradCheckStats& acc, const GradCheckStats& s) {
  acc.max_rel_error = std::max(acc.max_rel_error, s.max_rel_error);
  acc.checked += s.checked;
  acc.skipped += s.skipped;
}

/// Uniform values kept at least `gap` away from each kink in `kinks`.
inline Tensor<double> away_from(const Shape& s, Rng& rng, double lo, double hi, std::vector<double> kinks,
                                double gap = 1e-3) {
  Tensor<double> t(s);
  for (auto& v : t.data()) {
    bool ok;
    do {
      v = rng.uniform(lo, hi);
      ok = true;
      for (double k : kinks) ok = ok && std::abs(v - k) > gap;
    } while (!ok);
  }
  return t;
}

inline NetworkConfig grad_check_network_config() {
  // Same depth and widths as the desk pruned preset at a small resolution.
  NetworkConfig c = presets::desk_pruned();
  c.input_height = 16;
  c.input_width = 16;
  return c;
}

inline std::vector<OpGradReport> run_gradient_suite(int instances = 20, std::uint64_t seed = 1234) {
  std::vector<OpGradReport> out;
  Rng rng(seed);
  auto run = [&](const std::string& op, auto&& one_instance) {
    OpGradReport r{op, instances, {}};
    for (int i = 0; i < instances; ++i) merge_into(r.stats, one_instance());
    out.push_back(r);
  };
  using Vd = Var<double>;

  run("conv2d", [&] {
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2), k = 1 + 2 * rng.below(2);
    Vd x(random_tensor<double>({2, 2, 5, 6}, rng), true);
    Vd w(random_tensor<double>({3, 2, k, k}, rng), true);
    Vd b(random_tensor<double>({3}, rng), true);
    const auto shape = kernels::conv2d_forward(x.value(), w.value(), b.value(), stride, pad).shape();
    const auto r = random_tensor<double>(shape, rng);
    return grad_check({x, w, b}, [&](Tape<double>* t) { return projection_loss(t, conv2d(t, x, w, b, stride, pad), r); },
                      rng);
  });

  run("conv_transpose2d", [&] {
    Vd x(random_tensor<double>({2, 3, 3, 2}, rng), true);
    Vd w(random_tensor<double>({3, 2, 2, 2}, rng), true);
    Vd b(random_tensor<double>({2}, rng), true);
    const auto r = random_tensor<double>({2, 2, 6, 4}, rng);
    return grad_check({x, w, b}, [&](Tape<double>* t) { return projection_loss(t, conv_transpose2d(t, x, w, b, 2), r); },
                      rng);
  });

  run("maxpool2d", [&] {
    Vd x(random_tensor<double>({2, 2, 4, 6}, rng), true);
    const auto r = random_tensor<double>({2, 2, 2, 3}, rng);
    return grad_check({x}, [&](Tape<double>* t) { return projection_loss(t, maxpool2d(t, x), r); }, rng);
  });

  run("batchnorm2d", [&] {
    Vd x(random_tensor<double>({3, 2, 3, 3}, rng, -2, 3), true);
    Vd g(random_tensor<double>({2}, rng, 0.5, 1.5), true);
    Vd b(random_tensor<double>({2}, rng), true);
    const auto r = random_tensor<double>({3, 2, 3, 3}, rng);
    return grad_check({x, g, b},
                      [&](Tape<double>* t) {
                        BatchNormState<double> st(2);
                        return projection_loss(t, batchnorm2d(t, x, g, b, st, Mode::Train), r);
                      },
                      rng);
  });

  run("leaky_relu", [&] {
    Vd x(away_from({24}, rng, -2, 2, {0.0}), true);
    const auto r = random_tensor<double>({24}, rng);
    return grad_check({x}, [&](Tape<double>* t) { return projection_loss(t, leaky_relu(t, x), r); }, rng, 24);
  });

  run("hard_sigmoid", [&] {
    Vd x(away_from({24}, rng, -4, 4, {-2.5, 2.5}), true);
    const auto r = random_tensor<double>({24}, rng);
    return grad_check({x}, [&](Tape<double>* t) { return projection_loss(t, hard_sigmoid(t, x), r); }, rng, 24);
  });

  run("dice_loss", [&] {
    Vd s(random_tensor<double>({16}, rng, 0, 1), true);
    const auto truth = random_binary({16}, rng);
    return grad_check({s}, [&](Tape<double>* t) { return dice_loss(t, s, truth, 1.0); }, rng, 16);
  });

  run("bce_loss", [&] {
    Vd s(random_tensor<double>({16}, rng, 0.02, 0.98), true);
    const auto truth = random_binary({16}, rng);
    return grad_check({s}, [&](Tape<double>* t) { return bce_loss(t, s, truth); }, rng, 16);
  });

  run("network", [&] {
    const NetworkConfig cfg = grad_check_network_config();
    auto net = SegmentationNetwork<double>::build(cfg, rng.next_u64());
    Vd x(random_tensor<double>({2, 1, 16, 16}, rng, 0, 1), true);
    const auto truth = random_binary({2, 1, 16, 16}, rng, 0.3);
    std::vector<Vd> leaves{x};
    for (auto& [_, p] : net.parameters()) leaves.push_back(p);
    return grad_check(leaves, [&](Tape<double>* t) { return dice_loss(t, net.forward(x, Mode::Train, t), truth); }, rng,
                      2);
  });
  return out;
}

}  // namespace fireline::testing
