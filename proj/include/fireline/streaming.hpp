#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "fireline/config.hpp"
#include "fireline/losses.hpp"
#include "fireline/netpbm.hpp"
#include "fireline/tensor.hpp"

namespace fireline {

/// Stacks a [1, H, W] frame and its feedback masks into a [1, 1+F, H, W]
/// network input, channel order [frame, feedback...].
template <typename T>
Tensor<T> assemble_input(const Tensor<T>& frame, const std::vector<const Tensor<T>*>& feedback) {
  const std::size_t h = frame.dim(frame.rank() - 2), w = frame.dim(frame.rank() - 1), hw = h * w;
  if (frame.size() != hw) throw ShapeError("assemble_input: frame must be a single channel, got " + shape_str(frame.shape()));
  Tensor<T> x({1, 1 + feedback.size(), h, w});
  std::memcpy(x.ptr(), frame.ptr(), hw * sizeof(T));
  for (std::size_t k = 0; k < feedback.size(); ++k) {
    if (feedback[k]->size() != hw)
      throw ShapeError("assemble_input: feedback mask " + std::to_string(k) + " has shape " +
                       shape_str(feedback[k]->shape()) + ", frame has " + shape_str(frame.shape()));
    std::memcpy(x.ptr() + (k + 1) * hw, feedback[k]->ptr(), hw * sizeof(T));
  }
  return x;
}

/// Real-time PrevPred inference over one video stream. Keeps the last
/// max(offsets) binarized predictions; offsets reaching before frame 0 see
/// an all-zero mask. `Model` needs config() and a const predict().
template <typename Model, typename T = float>
class StreamState {
 public:
  struct Output {
    Tensor<T> soft;  // [1, H, W] in [0, 1]
    Tensor<T> mask;  // binarized soft
  };

  explicit StreamState(const Model& net, double threshold = kBinarizeThreshold)
      : net_(&net), threshold_(threshold) {
    const NetworkConfig& c = net.config();
    if (!c.has_feedback())
      throw ConfigError("network '" + c.name + "' has no feedback channels; use plain per-frame inference");
    offsets_ = c.feedback_offsets;
    h_ = static_cast<std::size_t>(c.input_height);
    w_ = static_cast<std::size_t>(c.input_width);
    zero_ = Tensor<T>({1, h_, w_});
    ring_.assign(static_cast<std::size_t>(c.max_offset()), zero_);
  }

  void reset() {
    frames_seen_ = 0;
    for (auto& m : ring_) m.fill(T{0});
  }

  std::size_t frames_seen() const { return frames_seen_; }
  std::size_t capacity() const { return ring_.size(); }
  std::size_t forward_calls() const { return forward_calls_; }

  /// Mask fed at the next frame for feedback offset `offset`.
  const Tensor<T>& served(int offset) const {
    const auto t = static_cast<long long>(frames_seen_);
    if (offset < 1 || offset > static_cast<int>(ring_.size()))
      throw UsageError("offset " + std::to_string(offset) + " outside the buffer");
    if (t - offset < 0) return zero_;
    return ring_[static_cast<std::size_t>(t - offset) % ring_.size()];
  }

  Tensor<T> next_input(const Tensor<T>& frame) const {
    if (frame.shape() != Shape{1, h_, w_})
      throw ShapeError("stream frame has shape " + shape_str(frame.shape()) + ", network expects " +
                       shape_str({1, h_, w_}));
    std::vector<const Tensor<T>*> fb;
    for (int o : offsets_) fb.push_back(&served(o));
    return assemble_input(frame, fb);
  }

  Output push_frame(const Tensor<T>& frame) {
    const Tensor<T> x = next_input(frame);
    ++forward_calls_;
    Tensor<T> soft = net_->predict(x).reshaped({1, h_, w_});
    Tensor<T> mask = binarize(soft, threshold_);
    ring_[frames_seen_ % ring_.size()] = mask;
    ++frames_seen_;
    return {std::move(soft), std::move(mask)};
  }

 private:
  const Model* net_;
  double threshold_;
  std::vector<int> offsets_;
  std::size_t h_ = 0, w_ = 0;
  Tensor<T> zero_;
  std::vector<Tensor<T>> ring_;
  std::size_t frames_seen_ = 0;
  std::size_t forward_calls_ = 0;
};

template <typename Model>
StreamState<Model> start_clip(const Model& net) {
  return StreamState<Model>(net);
}

template <typename T>
struct ClipPrediction {
  std::vector<Tensor<T>> soft;
  std::vector<Tensor<T>> masks;
};

/// Masks for every frame: streaming when the network has feedback channels,
/// independent per-frame inference otherwise.
template <typename Model, typename T = float>
ClipPrediction<T> predict_clip(const Model& net, const std::vector<Tensor<T>>& frames) {
  ClipPrediction<T> out;
  if (net.config().has_feedback()) {
    StreamState<Model, T> s(net);
    for (const auto& f : frames) {
      auto o = s.push_frame(f);
      out.soft.push_back(std::move(o.soft));
      out.masks.push_back(std::move(o.mask));
    }
  } else {
    for (const auto& f : frames) {
      Tensor<T> soft = net.predict(f.reshaped({1, 1, f.dim(1), f.dim(2)})).reshaped(f.shape());
      out.masks.push_back(binarize(soft));
      out.soft.push_back(std::move(soft));
    }
  }
  return out;
}

struct TemporalReport {
  double pred_iou = 1.0;   // mean IoU of consecutive predicted masks
  double truth_iou = 1.0;  // same for ground truth
  double ratio = 1.0;      // pred / truth; 0/0 reads as 1
};

/// IoU of two binary masks; two empty masks give 1.
template <typename T>
double mask_iou(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mask_iou: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] >= T(0.5), y = b[i] >= T(0.5);
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

template <typename T>
double mean_consecutive_iou(const std::vector<Tensor<T>>& masks) {
  if (masks.size() < 2) return 1.0;
  double s = 0;
  for (std::size_t t = 0; t + 1 < masks.size(); ++t) s += mask_iou(masks[t], masks[t + 1]);
  return s / static_cast<double>(masks.size() - 1);
}

template <typename T>
TemporalReport temporal_consistency(const std::vector<Tensor<T>>& pred, const std::vector<Tensor<T>>& truth) {
  if (pred.empty()) throw UsageError("temporal_consistency: empty sequence");
  if (pred.size() != truth.size())
    throw UsageError("temporal_consistency: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " truth masks");
  TemporalReport r;
  r.pred_iou = mean_consecutive_iou(pred);
  r.truth_iou = mean_consecutive_iou(truth);
  if (r.truth_iou == 0) r.ratio = r.pred_iou == 0 ? 1.0 : std::numeric_limits<double>::infinity();
  else r.ratio = r.pred_iou / r.truth_iou;
  return r;
}

/// Gray frame with the mask perimeter (set pixels with an unset 4-neighbour
/// or on the border) painted red.
template <typename T>
netpbm::Image overlay(const Tensor<T>& frame, const Tensor<T>& mask) {
  const std::size_t h = frame.dim(1), w = frame.dim(2);
  netpbm::Image img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.pixels.resize(3 * h * w);
  auto set = [&](std::size_t y, std::size_t x) { return mask[y * w + x] >= T(0.5); };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const bool edge = set(y, x) && (y == 0 || x == 0 || y + 1 == h || x + 1 == w || !set(y - 1, x) ||
                                      !set(y + 1, x) || !set(y, x - 1) || !set(y, x + 1));
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp<double>(frame[i], 0, 1) * 255));
      img.pixels[3 * i + 0] = edge ? 255 : g;
      img.pixels[3 * i + 1] = edge ? 0 : g;
      img.pixels[3 * i + 2] = edge ? 0 : g;
    }
  return img;
}

}  // namespace fireline
