#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fireline/augment.hpp"
#include "fireline/losses.hpp"
#include "fireline/network.hpp"
#include "fireline/optim.hpp"
#include "fireline/streaming.hpp"
#include "fireline/synth.hpp"

namespace fireline {

struct TrainPlan {
  int epochs = 150;
  std::size_t batch_size = 4;
  int teacher_forcing_epochs = -1;  // -1: the first 20% of epochs
  std::uint64_t seed = 0;
  std::size_t clips_per_epoch = 0;      // 0: every training clip
  std::size_t frames_per_epoch = 0;     // 0: every frame of the chosen clips
  std::size_t val_clips_per_epoch = 0;  // 0: every validation clip
  bool augment = true;
  bool record_time = true;  // false writes 0 seconds, making the history CSV reproducible
  unsigned eval_threads = 1;
  double plateau_factor = 0.5;
  int plateau_patience = 10;
  double plateau_min_delta = 1e-6;

  int resolved_teacher_forcing() const {
    return teacher_forcing_epochs >= 0 ? teacher_forcing_epochs : epochs / 5;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (resolved_teacher_forcing() > epochs)
      throw ConfigError("teacher_forcing_epochs (" + std::to_string(teacher_forcing_epochs) +
                        ") exceeds epochs (" + std::to_string(epochs) + ")");
    if (eval_threads < 1) throw ConfigError("eval_threads must be >= 1");
    if (teacher_forcing_epochs < -1) throw ConfigError("teacher_forcing_epochs must be >= 0");
    PlateauScheduler(1.0, plateau_factor, plateau_patience, plateau_min_delta);
  }
};

inline void to_json(nlohmann::json& j, const TrainPlan& p) {
  j = {{"epochs", p.epochs},
       {"batch_size", p.batch_size},
       {"teacher_forcing_epochs", p.resolved_teacher_forcing()},
       {"seed", p.seed},
       {"clips_per_epoch", p.clips_per_epoch},
       {"frames_per_epoch", p.frames_per_epoch},
       {"val_clips_per_epoch", p.val_clips_per_epoch},
       {"augment", p.augment},
       {"record_time", p.record_time},
       {"eval_threads", p.eval_threads},
       {"plateau_factor", p.plateau_factor},
       {"plateau_patience", p.plateau_patience},
       {"plateau_min_delta", p.plateau_min_delta}};
}

/// Reduced plans sized for a single desktop core. Twelve epochs instead of
/// 150, so the plateau patience shrinks with them.
inline TrainPlan desk_plan(std::uint64_t seed) {
  TrainPlan p;
  p.epochs = 12;
  p.plateau_patience = 2;
  p.batch_size = 4;
  p.seed = seed;
  p.clips_per_epoch = 4;
  p.frames_per_epoch = 64;
  p.val_clips_per_epoch = 4;
  return p;
}

/// Adam settings for the desk plan: the short schedule needs a larger step.
inline AdamConfig desk_adam() {
  AdamConfig a;
  a.learning_rate = 1e-3;
  return a;
}

enum class FeedbackSource { None, GroundTruth, Predictions };

inline std::string to_string(FeedbackSource s) {
  switch (s) {
    case FeedbackSource::None: return "none";
    case FeedbackSource::GroundTruth: return "ground_truth";
    case FeedbackSource::Predictions: return "predictions";
  }
  return "?";
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;  // rate used during the epoch
  double seconds = 0;
  double val_f1 = 0;
  FeedbackSource feedback = FeedbackSource::None;
};

inline std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,train_loss,val_loss,lr,seconds\n";
  char buf[160];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.3f\n", r.epoch, r.train_loss, r.val_loss, r.lr, r.seconds);
    out += buf;
  }
  return out;
}

/// Streaming sums for dice/BCE over many frames, combined in a fixed order.
struct LossAccumulator {
  KahanSum<double> inter, pred_sum, truth_sum, bce;
  std::size_t count = 0;

  template <typename T>
  void add(const Tensor<T>& pred, const Tensor<T>& truth) {
    if (pred.size() != truth.size()) throw ShapeError("loss accumulator: size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double s = pred[i], r = truth[i];
      inter.add(s * r);
      pred_sum.add(s);
      truth_sum.add(r);
      const double p = std::clamp(s, kBceClamp, 1 - kBceClamp);
      bce.add(-(r * std::log(p) + (1 - r) * std::log(1 - p)));
    }
    count += pred.size();
  }

  void merge(const LossAccumulator& o) {
    inter.add(o.inter.value());
    pred_sum.add(o.pred_sum.value());
    truth_sum.add(o.truth_sum.value());
    bce.add(o.bce.value());
    count += o.count;
  }

  double value(const LossConfig& cfg) const {
    if (cfg.kind == LossKind::Dice)
      return -2 * inter.value() / (pred_sum.value() + truth_sum.value() + cfg.epsilon);
    return count ? bce.value() / static_cast<double>(count) : 0.0;
  }
};

struct EvalResult {
  double loss = 0;
  double f1 = 100;
  Confusion confusion;
  std::size_t frames = 0;
};

/// Held-out evaluation: streaming inference per clip, micro-averaged F1.
/// Clips may be spread over threads; results merge in clip order.
template <typename Model>
EvalResult evaluate(const Model& net, const std::vector<const Clip*>& clips, const LossConfig& loss,
                    unsigned threads = 1) {
  struct PerClip {
    LossAccumulator acc;
    Confusion conf;
    std::size_t frames = 0;
  };
  std::vector<PerClip> parts(clips.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t c = first; c < clips.size(); c += stride) {
      const Clip& clip = *clips[c];
      const auto pred = predict_clip(net, clip.frames);
      for (std::size_t t = 0; t < clip.length(); ++t) {
        parts[c].acc.add(pred.soft[t], clip.masks[t]);
        parts[c].conf += confusion(pred.masks[t], clip.masks[t]);
      }
      parts[c].frames = clip.length();
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(clips.size(), 1))));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  LossAccumulator acc;
  EvalResult r;
  for (const auto& p : parts) {
    acc.merge(p.acc);
    r.confusion += p.conf;
    r.frames += p.frames;
  }
  r.loss = acc.value(loss);
  r.f1 = r.confusion.f1();
  return r;
}

/// Last `val_count` clips are held out whole; the rest train.
struct Split {
  std::vector<const Clip*> train;
  std::vector<const Clip*> val;
};

inline Split split_clips(const std::vector<Clip>& clips, std::size_t val_count) {
  if (val_count >= clips.size())
    throw ConfigError("validation split of " + std::to_string(val_count) + " clips leaves no training clips out of " +
                      std::to_string(clips.size()));
  Split s;
  for (std::size_t i = 0; i < clips.size(); ++i) (i + val_count < clips.size() ? s.train : s.val).push_back(&clips[i]);
  return s;
}

/// Default hold-out: a quarter of the clips, at least one.
inline std::size_t default_val_count(std::size_t clips) { return std::max<std::size_t>(1, clips / 4); }

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::map<std::string, Tensor<float>> best_state;
  long steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace train_detail {

inline constexpr std::uint64_t kSampleTag = 0x73616d70, kAugmentTag = 0x6175676d, kValTag = 0x76616c73;

struct Sample {
  std::size_t clip;  // index into the epoch's clip list
  std::size_t frame;
};

}  // namespace train_detail

/// Runs the full training recipe on `net` in place.
inline TrainResult train(SegmentationNetwork<float>& net, const std::vector<const Clip*>& train_clips,
                  const std::vector<const Clip*>& val_clips, const TrainPlan& plan, const LossConfig& loss_cfg,
                  const AdamConfig& adam_cfg, const AugmentConfig& aug_cfg = {},
                  const EpochCallback& on_epoch = nullptr) {
  using namespace train_detail;
  using T = float;
  plan.validate();
  loss_cfg.validate();
  aug_cfg.validate();
  if (train_clips.empty()) throw ConfigError("training set is empty");
  if (val_clips.empty()) throw ConfigError("validation set is empty");
  const NetworkConfig& nc = net.config();
  for (const Clip* c : train_clips)
    if (c->height() != static_cast<std::size_t>(nc.input_height) || c->width() != static_cast<std::size_t>(nc.input_width))
      throw ShapeError("clip of " + std::to_string(c->width()) + "x" + std::to_string(c->height()) +
                       " does not match network input " + std::to_string(nc.input_width) + "x" +
                       std::to_string(nc.input_height));

  const std::size_t h = static_cast<std::size_t>(nc.input_height), w = static_cast<std::size_t>(nc.input_width);
  const std::size_t hw = h * w, channels = static_cast<std::size_t>(nc.input_channels);
  const int teacher = plan.resolved_teacher_forcing();
  const Tensor<T> zero({1, h, w});

  Adam<T> adam(adam_cfg);
  PlateauScheduler sched(adam_cfg.learning_rate, plan.plateau_factor, plan.plateau_patience, plan.plateau_min_delta);
  TrainResult result;
  Rng aug_rng(derive_seed(plan.seed, 0, kAugmentTag));

  std::vector<const Clip*> val_subset = val_clips;
  if (plan.val_clips_per_epoch && plan.val_clips_per_epoch < val_subset.size()) {
    Rng r(derive_seed(plan.seed, 0, kValTag));
    r.shuffle(val_subset.begin(), val_subset.end());
    val_subset.resize(plan.val_clips_per_epoch);
  }

  for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(plan.seed, static_cast<std::uint64_t>(epoch), kSampleTag));
    std::vector<const Clip*> clips = train_clips;
    rng.shuffle(clips.begin(), clips.end());
    if (plan.clips_per_epoch && plan.clips_per_epoch < clips.size()) clips.resize(plan.clips_per_epoch);

    std::vector<Sample> samples;
    for (std::size_t c = 0; c < clips.size(); ++c)
      for (std::size_t t = 0; t < clips[c]->length(); ++t) samples.push_back({c, t});
    rng.shuffle(samples.begin(), samples.end());
    if (plan.frames_per_epoch && plan.frames_per_epoch < samples.size()) samples.resize(plan.frames_per_epoch);

    const FeedbackSource source = !nc.has_feedback()  ? FeedbackSource::None
                                  : epoch <= teacher ? FeedbackSource::GroundTruth
                                                     : FeedbackSource::Predictions;
    // The network's own binarized masks, streamed in clip order from frame 0
    // up to the last sampled frame of each clip.
    std::vector<std::vector<Tensor<T>>> predicted(clips.size());
    if (source == FeedbackSource::Predictions) {
      std::vector<std::size_t> last(clips.size(), 0);
      std::vector<bool> used(clips.size(), false);
      for (const auto& s : samples) {
        last[s.clip] = std::max(last[s.clip], s.frame);
        used[s.clip] = true;
      }
      for (std::size_t c = 0; c < clips.size(); ++c) {
        if (!used[c]) continue;
        StreamState<SegmentationNetwork<T>> stream(net);
        for (std::size_t t = 0; t < last[c]; ++t)  // frame last[c] itself is never fed back
          predicted[c].push_back(stream.push_frame(clips[c]->frames[t]).mask);
      }
    }

    const double lr = sched.learning_rate();
    KahanSum<double> epoch_loss;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < samples.size(); b0 += plan.batch_size) {
      const std::size_t bn = std::min(plan.batch_size, samples.size() - b0);
      Tensor<T> x({bn, channels, h, w});
      Tensor<T> y({bn, 1, h, w});
      for (std::size_t k = 0; k < bn; ++k) {
        const Sample& s = samples[b0 + k];
        const Clip& clip = *clips[s.clip];
        std::vector<Tensor<T>> fb;
        for (int o : nc.feedback_offsets) {
          const long src = static_cast<long>(s.frame) - o;
          if (src < 0) fb.push_back(zero);
          else if (source == FeedbackSource::GroundTruth) fb.push_back(clip.masks[static_cast<std::size_t>(src)]);
          else fb.push_back(predicted[s.clip][static_cast<std::size_t>(src)]);
        }
        Tensor<T> frame = clip.frames[s.frame];
        Tensor<T> mask = clip.masks[s.frame];
        if (plan.augment) {
          auto a = augment(frame, mask, fb, aug_cfg, aug_rng);
          frame = std::move(a.frame);
          mask = std::move(a.mask);
          fb = std::move(a.feedback);
        }
        T* xp = x.ptr() + k * channels * hw;
        std::copy(frame.ptr(), frame.ptr() + hw, xp);
        for (std::size_t f = 0; f < fb.size(); ++f) std::copy(fb[f].ptr(), fb[f].ptr() + hw, xp + (f + 1) * hw);
        std::copy(mask.ptr(), mask.ptr() + hw, y.ptr() + k * hw);
      }

      Tape<T> tape;
      net.zero_grad();
      Var<T> out = net.forward(Var<T>(std::move(x)), Mode::Train, &tape);
      Var<T> loss = compute_loss(&tape, out, y, loss_cfg);
      const double lv = loss.value()[0];
      ++result.steps;
      if (!std::isfinite(lv)) throw DivergenceError(epoch, result.steps, "loss is " + std::to_string(lv));
      tape.backward(loss);
      try {
        adam.step(net.parameters(), lr);
      } catch (const NumericError& e) {
        throw DivergenceError(epoch, result.steps, e.what());
      }
      epoch_loss.add(lv);
      ++batches;
    }

    const EvalResult val = evaluate(net, val_subset, loss_cfg, plan.eval_threads);
    if (!std::isfinite(val.loss)) throw DivergenceError(epoch, result.steps, "validation loss is not finite");
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? epoch_loss.value() / static_cast<double>(batches) : 0.0;
    rec.val_loss = val.loss;
    rec.val_f1 = val.f1;
    rec.lr = lr;
    rec.feedback = source;
    sched.update(val.loss);
    if (val.loss < result.best_val_loss) {
      result.best_val_loss = val.loss;
      result.best_epoch = epoch;
      result.best_state = net.named_tensors();
    }
    rec.seconds = plan.record_time
                      ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                      : 0.0;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

struct OverfitResult {
  int steps = 0;
  double final_loss = 0;
  double best_loss = 0;
  bool converged = false;
};

/// Repeated Adam steps on one fixed batch until the loss reaches `target`.
template <typename T>
OverfitResult overfit(SegmentationNetwork<T>& net, const Tensor<T>& x, const Tensor<T>& y, int max_steps,
                      double target, const AdamConfig& adam_cfg, const LossConfig& loss_cfg = {}) {
  Adam<T> adam(adam_cfg);
  OverfitResult r;
  r.best_loss = std::numeric_limits<double>::infinity();
  for (int s = 1; s <= max_steps; ++s) {
    Tape<T> tape;
    net.zero_grad();
    Var<T> out = net.forward(Var<T>(x), Mode::Train, &tape);
    Var<T> loss = compute_loss(&tape, out, y, loss_cfg);
    r.final_loss = loss.value()[0];
    if (!std::isfinite(r.final_loss)) throw DivergenceError(0, s, "overfit loss is not finite");
    r.best_loss = std::min(r.best_loss, r.final_loss);
    r.steps = s;
    if (r.final_loss <= target) {
      r.converged = true;
      break;
    }
    tape.backward(loss);
    adam.step(net.parameters(), adam_cfg.learning_rate);
  }
  return r;
}

}  // namespace fireline
