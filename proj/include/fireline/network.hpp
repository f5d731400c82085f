#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fireline/config.hpp"
#include "fireline/ops.hpp"
#include "fireline/rng.hpp"

namespace fireline {

inline std::size_t conv_param_count(std::size_t cin, std::size_t cout, std::size_t k) {
  return cout * cin * k * k + cout;
}
inline std::size_t batchnorm_param_count(std::size_t c) { return 2 * c; }

inline std::size_t resblock_param_count(std::size_t cin, std::size_t cout) {
  std::size_t n = conv_param_count(cin, cout, 3) + batchnorm_param_count(cout) +
                  conv_param_count(cout, cout, 3) + batchnorm_param_count(cout);
  if (cin != cout) n += conv_param_count(cin, cout, 1) + batchnorm_param_count(cout);
  return n;
}

/// Trainable scalars (conv weights and biases, batchnorm gamma and beta) of
/// the network described by `config`, in closed form.
inline std::size_t param_count(const NetworkConfig& config) {
  config.validate();
  const int d = config.depth;
  std::size_t total = 0;
  std::size_t cin = static_cast<std::size_t>(config.input_channels);
  for (int i = 0; i < d; ++i) {
    const auto w = static_cast<std::size_t>(config.stage_width(i));
    total += resblock_param_count(cin, w);
    cin = w;
  }
  const auto mid = static_cast<std::size_t>(config.stage_width(d));
  total += resblock_param_count(cin, mid);
  std::size_t below = mid;
  for (int i = d - 1; i >= 0; --i) {
    const auto w = static_cast<std::size_t>(config.stage_width(i));
    total += below * w * 2 * 2 + w + batchnorm_param_count(w);  // transposed conv + bn
    total += resblock_param_count(2 * w, w);
    below = w;
  }
  total += conv_param_count(below, 1, 1);
  return total;
}

struct StageInfo {
  int index;
  int scale_divisor;  // spatial extent = input extent / scale_divisor
  int encoder_width;
  int decoder_width;
};

/// Shapes observed during one forward pass, for structural checks.
struct ForwardTrace {
  std::vector<Shape> skips_produced;  // by encoder stage index
  std::vector<Shape> skips_consumed;  // by decoder stage index
  int upsample_stages = 0;
};

/// U-Net style encoder-decoder. Encoder stage i: resnet block then 2x2
/// max-pool; bottleneck resnet block; decoder stage i: 2x2 transposed conv
/// (+ batchnorm, leaky relu), concatenation with encoder skip i, resnet
/// block; head: 1x1 conv and hard sigmoid.
template <typename T>
class SegmentationNetwork {
 public:
  using Params = std::map<std::string, Var<T>>;
  using BatchNorms = std::map<std::string, BatchNormState<T>>;

  /// Fresh He-initialized network. Pruned variants are built the same way;
  /// there is deliberately no path that derives one network from another.
  static SegmentationNetwork build(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    SegmentationNetwork net(config);
    Rng rng(seed);
    net.init(rng);
    return net;
  }

  const NetworkConfig& config() const { return config_; }
  Params& parameters() { return params_; }
  const Params& parameters() const { return params_; }
  BatchNorms& batchnorms() { return bn_; }
  const BatchNorms& batchnorms() const { return bn_; }

  std::size_t parameter_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  /// Train mode records on `tape` (if given) and updates batchnorm running
  /// statistics. Eval mode mutates nothing.
  Var<T> forward(const Var<T>& batch, Mode mode, Tape<T>* tape = nullptr,
                 ForwardTrace* trace = nullptr) {
    return run(batch, mode, tape, trace, mode == Mode::Train ? &bn_ : nullptr);
  }

  /// Eval-mode forward; safe to call concurrently on a shared network.
  Tensor<T> predict(const Tensor<T>& batch) const {
    return run(Var<T>(batch), Mode::Eval, nullptr, nullptr, nullptr).value();
  }

  std::vector<StageInfo> describe() const {
    std::vector<StageInfo> out;
    for (int i = 0; i < config_.depth; ++i)
      out.push_back({i, 1 << i, config_.stage_width(i), config_.stage_width(i)});
    return out;
  }

  /// Parameters and batchnorm running statistics keyed by name.
  std::map<std::string, Tensor<T>> named_tensors() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, p] : params_) out.emplace(name, p.value());
    for (const auto& [name, s] : bn_) {
      out.emplace(name + ".running_mean", s.running_mean);
      out.emplace(name + ".running_var", s.running_var);
    }
    return out;
  }

  /// Overwrites every named tensor; names and shapes must match exactly.
  void assign_named(const std::map<std::string, Tensor<T>>& tensors) {
    auto expected = named_tensors();
    if (expected.size() != tensors.size())
      throw CorruptCheckpointError("tensor table has " + std::to_string(tensors.size()) +
                                   " entries, architecture needs " +
                                   std::to_string(expected.size()));
    for (const auto& [name, t] : tensors) {
      auto it = expected.find(name);
      if (it == expected.end()) throw CorruptCheckpointError("unexpected tensor '" + name + "'");
      if (it->second.shape() != t.shape())
        throw CorruptCheckpointError("tensor '" + name + "' has shape " + shape_str(t.shape()) +
                                     ", architecture needs " + shape_str(it->second.shape()));
    }
    for (auto& [name, p] : params_) {
      p.mutable_value() = tensors.at(name);
      p.set_requires_grad(true);
    }
    for (auto& [name, s] : bn_) {
      s.running_mean = tensors.at(name + ".running_mean");
      s.running_var = tensors.at(name + ".running_var");
    }
  }

  SegmentationNetwork clone() const { return cast<T>(); }

  template <typename U>
  SegmentationNetwork<U> cast() const {
    SegmentationNetwork<U> out(config_);
    for (const auto& [name, p] : params_)
      out.params_.emplace(name, Var<U>(p.value().template cast<U>(), true));
    for (const auto& [name, s] : bn_) {
      BatchNormState<U> st;
      st.running_mean = s.running_mean.template cast<U>();
      st.running_var = s.running_var.template cast<U>();
      out.bn_.emplace(name, std::move(st));
    }
    return out;
  }

 private:
  template <typename U>
  friend class SegmentationNetwork;

  explicit SegmentationNetwork(NetworkConfig config) : config_(std::move(config)) {}

  static std::string enc(int i) { return "enc" + std::to_string(i); }
  static std::string dec(int i) { return "dec" + std::to_string(i); }

  void add_conv(Rng& rng, const std::string& name, std::size_t cin, std::size_t cout,
                std::size_t k) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    Tensor<T> w({cout, cin, k, k});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(stddev * rng.normal());
    params_.emplace(name + ".weight", Var<T>(std::move(w), true));
    params_.emplace(name + ".bias", Var<T>(Tensor<T>({cout}), true));
  }

  // Each output pixel of a kernel == stride transposed conv sees exactly
  // `cin` inputs, so fan_in = cin.
  void add_conv_transpose(Rng& rng, const std::string& name, std::size_t cin, std::size_t cout) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(cin));
    Tensor<T> w({cin, cout, 2, 2});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(stddev * rng.normal());
    params_.emplace(name + ".weight", Var<T>(std::move(w), true));
    params_.emplace(name + ".bias", Var<T>(Tensor<T>({cout}), true));
  }

  void add_batchnorm(const std::string& name, std::size_t c) {
    params_.emplace(name + ".gamma", Var<T>(Tensor<T>({c}, T{1}), true));
    params_.emplace(name + ".beta", Var<T>(Tensor<T>({c}), true));
    bn_.emplace(name, BatchNormState<T>(c));
  }

  void add_resblock(Rng& rng, const std::string& name, std::size_t cin, std::size_t cout) {
    add_conv(rng, name + ".conv1", cin, cout, 3);
    add_batchnorm(name + ".bn1", cout);
    add_conv(rng, name + ".conv2", cout, cout, 3);
    add_batchnorm(name + ".bn2", cout);
    if (cin != cout) {
      add_conv(rng, name + ".proj", cin, cout, 1);
      add_batchnorm(name + ".proj_bn", cout);
    }
  }

  void init(Rng& rng) {
    const int d = config_.depth;
    auto width = [&](int i) { return static_cast<std::size_t>(config_.stage_width(i)); };
    std::size_t cin = static_cast<std::size_t>(config_.input_channels);
    for (int i = 0; i < d; ++i) {
      add_resblock(rng, enc(i), cin, width(i));
      cin = width(i);
    }
    add_resblock(rng, "mid", cin, width(d));
    std::size_t below = width(d);
    for (int i = d - 1; i >= 0; --i) {
      add_conv_transpose(rng, dec(i) + ".up", below, width(i));
      add_batchnorm(dec(i) + ".up_bn", width(i));
      add_resblock(rng, dec(i) + ".block", 2 * width(i), width(i));
      below = width(i);
    }
    add_conv(rng, "head", below, 1, 1);
  }

  const Var<T>& p(const std::string& name) const { return params_.at(name); }

  struct Ctx {
    Mode mode;
    Tape<T>* tape;
    BatchNorms* states;  // non-null only in train mode
  };

  Var<T> conv(const Ctx& c, const std::string& name, const Var<T>& x, std::size_t pad) const {
    return conv2d(c.tape, x, p(name + ".weight"), p(name + ".bias"), 1, pad);
  }

  Var<T> norm(const Ctx& c, const std::string& name, const Var<T>& x) const {
    if (c.mode == Mode::Train)
      return batchnorm2d(c.tape, x, p(name + ".gamma"), p(name + ".beta"), c.states->at(name),
                         Mode::Train);
    return batchnorm2d_eval(c.tape, x, p(name + ".gamma"), p(name + ".beta"), bn_.at(name));
  }

  Var<T> resblock(const Ctx& c, const std::string& name, const Var<T>& x) const {
    Var<T> h = leaky_relu(c.tape, norm(c, name + ".bn1", conv(c, name + ".conv1", x, 1)));
    h = norm(c, name + ".bn2", conv(c, name + ".conv2", h, 1));
    Var<T> shortcut = params_.count(name + ".proj.weight")
                          ? norm(c, name + ".proj_bn", conv(c, name + ".proj", x, 0))
                          : x;
    return leaky_relu(c.tape, add(c.tape, h, shortcut));
  }

  Var<T> run(const Var<T>& batch, Mode mode, Tape<T>* tape, ForwardTrace* trace,
             BatchNorms* states) const {
    const Shape& s = batch.shape();
    if (s.size() != 4 || s[1] != static_cast<std::size_t>(config_.input_channels) ||
        s[2] != static_cast<std::size_t>(config_.input_height) ||
        s[3] != static_cast<std::size_t>(config_.input_width))
      throw ShapeError("network expects input [N," + std::to_string(config_.input_channels) +
                       "," + std::to_string(config_.input_height) + "," +
                       std::to_string(config_.input_width) + "] (channels: " +
                       std::to_string(config_.input_channels) + " = frame + " +
                       std::to_string(config_.feedback_offsets.size()) +
                       " feedback masks), got " + shape_str(s));
    const Ctx c{mode, tape, states};
    const int d = config_.depth;
    std::vector<Var<T>> skips;
    Var<T> x = batch;
    for (int i = 0; i < d; ++i) {
      x = resblock(c, enc(i), x);
      skips.push_back(x);
      if (trace) trace->skips_produced.push_back(x.shape());
      x = maxpool2d(tape, x);
    }
    x = resblock(c, "mid", x);
    if (trace) trace->skips_consumed.resize(static_cast<std::size_t>(d));
    for (int i = d - 1; i >= 0; --i) {
      const std::string name = dec(i);
      x = conv_transpose2d(tape, x, p(name + ".up.weight"), p(name + ".up.bias"), 2);
      x = leaky_relu(tape, norm(c, name + ".up_bn", x));
      if (trace) {
        trace->skips_consumed[static_cast<std::size_t>(i)] = skips[static_cast<std::size_t>(i)].shape();
        ++trace->upsample_stages;
      }
      x = concat_channels(tape, std::vector<Var<T>>{x, skips[static_cast<std::size_t>(i)]});
      x = resblock(c, name + ".block", x);
    }
    x = hard_sigmoid(tape, conv(c, "head", x, 0));
#ifndef NDEBUG
    if (batch.value().all_finite()) assert(x.value().all_finite());
#endif
    return x;
  }

  NetworkConfig config_;
  Params params_;
  BatchNorms bn_;
};

}  // namespace fireline
