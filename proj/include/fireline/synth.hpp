#pragma once

// Synthetic IR wildfire clips: value-noise terrain, cellular fire growth,
// and unlabeled distractors (roads, water, flares).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fireline/rng.hpp"
#include "fireline/tensor.hpp"

namespace fireline {

struct GenParams {
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t length = 150;
  int ignitions = 2;
  double spread_probability = 0.35;
  int preburn_steps = 6;
  int burn_duration = 3;
  double cooling_frames = 6.0;  // e-folding time of burnt-area afterglow
  double burnt_contrast = 0.06;  // residual burnt-over-background intensity
  int noise_octaves = 4;
  double noise_amplitude = 0.3;
  double sensor_noise = 0.02;  // per-pixel standard deviation
  bool roads = true;
  bool water = true;
  bool flares = true;
  double flare_rate = 0.15;  // expected new flares per frame
  double no_fire_fraction = 0.75;

  void validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("generator: " + m); };
    if (height < 32 || width < 32) bad("height and width must be >= 32");
    if (length < 1) bad("length must be >= 1");
    if (ignitions < 1) bad("ignitions must be >= 1");
    if (!(spread_probability > 0 && spread_probability < 1)) bad("spread_probability must lie in (0, 1)");
    if (preburn_steps < 0) bad("preburn_steps must be >= 0");
    if (burn_duration < 1) bad("burn_duration must be >= 1");
    if (!(cooling_frames > 0)) bad("cooling_frames must be positive");
    if (!(burnt_contrast >= 0 && burnt_contrast <= 0.5)) bad("burnt_contrast must lie in [0, 0.5]");
    if (noise_octaves < 1 || noise_octaves > 6) bad("noise_octaves must lie in [1, 6]");
    if (!(noise_amplitude >= 0 && noise_amplitude <= 1)) bad("noise_amplitude must lie in [0, 1]");
    if (!(sensor_noise >= 0 && sensor_noise <= 0.2)) bad("sensor_noise must lie in [0, 0.2]");
    if (!(flare_rate >= 0 && flare_rate <= 1)) bad("flare_rate must lie in [0, 1]");
    if (!(no_fire_fraction >= 0 && no_fire_fraction <= 1)) bad("no_fire_fraction must lie in [0, 1]");
  }

  bool operator==(const GenParams&) const = default;
};

/// 128x128, 30-frame clips used by the desk presets.
inline GenParams desk_gen_params() {
  GenParams p;
  p.length = 30;
  p.no_fire_fraction = 0.5;
  return p;
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GenParams, height, width, length, ignitions, spread_probability,
                                   preburn_steps, burn_duration, cooling_frames, burnt_contrast,
                                   noise_octaves, noise_amplitude, sensor_noise, roads, water,
                                   flares, flare_rate, no_fire_fraction)

/// Strict parse: every key must be known. Missing keys keep their defaults.
inline GenParams gen_params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("generator params must be a JSON object");
  const nlohmann::json defaults = GenParams{};
  nlohmann::json merged = defaults;
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw ConfigError("unknown generator parameter '" + k + "'");
    merged[k] = v;
  }
  GenParams p;
  try {
    p = merged.get<GenParams>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator params: ") + e.what());
  }
  p.validate();
  return p;
}

struct Clip {
  std::vector<Tensor<float>> frames;  // each [1, H, W] in [0, 1]
  std::vector<Tensor<float>> masks;   // each [1, H, W] in {0, 1}
  std::uint64_t seed = 0;
  bool has_fire = false;
  GenParams params;

  std::size_t length() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames[0].dim(1); }
  std::size_t width() const { return frames.empty() ? 0 : frames[0].dim(2); }
};

namespace synth {

// Stream tags for the per-clip generators.
inline constexpr std::uint64_t kTerrainTag = 1, kFireTag = 2, kRoadTag = 3, kWaterTag = 4,
                               kFlareTag = 5, kSensorTag = 6, kPresenceTag = 7;

inline std::uint32_t lattice(std::uint64_t seed, std::uint64_t x, std::uint64_t y, std::uint64_t octave) {
  return static_cast<std::uint32_t>(
      splitmix64(seed ^ splitmix64(x * 0x9E3779B97F4A7C15ull + y * 0xC2B2AE3D27D4EB4Full + octave)) >> 32);
}

/// Q16 smoothstep: 3t^2 - 2t^3 for t in [0, 65536).
inline std::int64_t fade_q16(std::int64_t t) {
  return (3 * t * t - ((2 * t * t * t) >> 16)) >> 16;
}

/// Fractal value noise at integer pixel coordinates, Q16 in [0, 65535].
/// Pure integer arithmetic, so output is identical on every platform.
inline std::vector<std::int32_t> value_noise_q16(std::uint64_t seed, std::size_t h, std::size_t w,
                                                 int octaves) {
  std::vector<std::int64_t> acc(h * w, 0);
  std::int64_t total_weight = 0;
  for (int o = 0; o < octaves; ++o) {
    const std::int64_t cell = std::max<std::int64_t>(2, 64 >> o);
    const std::int64_t weight = std::int64_t{1} << (octaves - 1 - o);
    total_weight += weight;
    for (std::size_t y = 0; y < h; ++y) {
      const auto cy = static_cast<std::int64_t>(y) / cell;
      const std::int64_t sy = fade_q16((static_cast<std::int64_t>(y) % cell << 16) / cell);
      for (std::size_t x = 0; x < w; ++x) {
        const auto cx = static_cast<std::int64_t>(x) / cell;
        const std::int64_t sx = fade_q16((static_cast<std::int64_t>(x) % cell << 16) / cell);
        auto corner = [&](std::int64_t dx, std::int64_t dy) -> std::int64_t {
          return lattice(seed, static_cast<std::uint64_t>(cx + dx), static_cast<std::uint64_t>(cy + dy),
                         static_cast<std::uint64_t>(o)) >> 16;
        };
        const std::int64_t top = corner(0, 0) + (((corner(1, 0) - corner(0, 0)) * sx) >> 16);
        const std::int64_t bot = corner(0, 1) + (((corner(1, 1) - corner(0, 1)) * sx) >> 16);
        acc[y * w + x] += weight * (top + (((bot - top) * sy) >> 16));
      }
    }
  }
  std::vector<std::int32_t> out(h * w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int32_t>(acc[i] / total_weight);
  return out;
}

struct Flare {
  std::int64_t x, y, radius, frames_left;
};

/// Static scene layout shared by every frame of a clip.
struct Scene {
  std::size_t h = 0, w = 0;
  std::vector<double> background;     // terrain intensity
  std::vector<double> fuel;           // spread multiplier
  std::vector<std::uint8_t> water;
  std::vector<std::uint8_t> road;
};

inline Scene build_scene(const GenParams& p, std::uint64_t seed) {
  Scene s;
  s.h = p.height;
  s.w = p.width;
  const std::size_t n = s.h * s.w;
  const auto q = value_noise_q16(derive_seed(seed, 0, kTerrainTag), s.h, s.w, p.noise_octaves);
  s.background.resize(n);
  s.fuel.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = q[i] / 65535.0;
    s.background[i] = 0.2 + p.noise_amplitude * (v - 0.5);
    s.fuel[i] = 0.5 + v;
  }
  s.water.assign(n, 0);
  s.road.assign(n, 0);

  if (p.water) {
    Rng rng(derive_seed(seed, 0, kWaterTag));
    const auto blobs = rng.range(1, 2);
    for (std::int64_t b = 0; b < blobs; ++b) {
      const double cx = rng.uniform(0, static_cast<double>(s.w));
      const double cy = rng.uniform(0, static_cast<double>(s.h));
      const double rx = rng.uniform(4, static_cast<double>(s.w) / 8);
      const double ry = rng.uniform(4, static_cast<double>(s.h) / 8);
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          const double dx = (static_cast<double>(x) - cx) / rx, dy = (static_cast<double>(y) - cy) / ry;
          if (dx * dx + dy * dy <= 1.0) s.water[y * s.w + x] = 1;
        }
    }
  }
  if (p.roads) {
    Rng rng(derive_seed(seed, 0, kRoadTag));
    const auto roads = rng.range(1, 2);
    const double W = static_cast<double>(s.w), H = static_cast<double>(s.h);
    for (std::int64_t r = 0; r < roads; ++r) {
      // Endpoints on opposite edges.
      double x0, y0, x1, y1;
      if (rng.bernoulli(0.5)) {
        x0 = 0, x1 = W - 1, y0 = rng.uniform(0, H), y1 = rng.uniform(0, H);
      } else {
        y0 = 0, y1 = H - 1, x0 = rng.uniform(0, W), x1 = rng.uniform(0, W);
      }
      const double dx = x1 - x0, dy = y1 - y0, len = std::hypot(dx, dy);
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          const double d = std::abs(dy * (static_cast<double>(x) - x0) - dx * (static_cast<double>(y) - y0)) / len;
          if (d <= 1.0) s.road[y * s.w + x] = 1;
        }
    }
  }
  return s;
}

/// Cellular fire. Each cell records the step it ignited (-1 = never).
class FireSim {
 public:
  FireSim(const Scene& scene, const GenParams& p, std::uint64_t seed)
      : scene_(scene), p_(p), rng_(derive_seed(seed, 0, kFireTag)), ignited_(scene.h * scene.w, -1) {}

  bool burnable(std::size_t i) const { return !scene_.water[i] && !scene_.road[i]; }

  void ignite(int count) {
    const std::size_t n = ignited_.size();
    for (int k = 0; k < count; ++k) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        const auto i = static_cast<std::size_t>(rng_.below(n));
        if (burnable(i)) {
          ignited_[i] = step_;
          break;
        }
      }
    }
  }

  void advance() {
    const std::size_t h = scene_.h, w = scene_.w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        if (!burning(i)) continue;
        const std::size_t nbr[4] = {y > 0 ? i - w : i, x > 0 ? i - 1 : i, x + 1 < w ? i + 1 : i,
                                    y + 1 < h ? i + w : i};
        for (std::size_t j : nbr) {
          if (j == i || ignited_[j] >= 0 || !burnable(j)) continue;
          const double prob = std::min(0.95, p_.spread_probability * scene_.fuel[j]);
          if (rng_.uniform() < prob) {
            ignited_[j] = step_ + 1;  // not burning until the step completes
          }
        }
      }
    ++step_;
  }

  bool burning(std::size_t i) const {
    return labeled(i) && step_ - ignited_[i] < p_.burn_duration;
  }
  bool labeled(std::size_t i) const { return ignited_[i] >= 0 && ignited_[i] <= step_; }
  int age(std::size_t i) const { return step_ - ignited_[i]; }
  int step() const { return step_; }

 private:
  const Scene& scene_;
  const GenParams& p_;
  Rng rng_;
  std::vector<int> ignited_;
  int step_ = 0;
};

}  // namespace synth

/// One clip. When `has_fire` is unset, presence is drawn from the clip's own
/// stream with probability 1 - no_fire_fraction.
inline Clip generate_clip(const GenParams& params, std::uint64_t seed,
                          std::optional<bool> has_fire = std::nullopt) {
  params.validate();
  using namespace synth;
  Clip clip;
  clip.seed = seed;
  clip.params = params;
  clip.has_fire = has_fire.has_value()
                      ? *has_fire
                      : Rng(derive_seed(seed, 0, kPresenceTag)).uniform() >= params.no_fire_fraction;

  const Scene scene = build_scene(params, seed);
  const std::size_t h = params.height, w = params.width, n = h * w;
  FireSim fire(scene, params, seed);
  if (clip.has_fire) {
    fire.ignite(params.ignitions);
    for (int s = 0; s < params.preburn_steps; ++s) fire.advance();
  }
  Rng flare_rng(derive_seed(seed, 0, kFlareTag));
  Rng sensor(derive_seed(seed, 0, kSensorTag));
  std::vector<Flare> flares;

  clip.frames.reserve(params.length);
  clip.masks.reserve(params.length);
  for (std::size_t t = 0; t < params.length; ++t) {
    if (params.flares && flare_rng.uniform() < params.flare_rate) {
      flares.push_back({flare_rng.range(0, static_cast<std::int64_t>(w) - 1),
                        flare_rng.range(0, static_cast<std::int64_t>(h) - 1), flare_rng.range(1, 2),
                        flare_rng.range(1, 3)});
    }
    Tensor<float> frame({1, h, w});
    Tensor<float> mask({1, h, w});
    for (std::size_t i = 0; i < n; ++i) {
      double v = scene.background[i];
      if (scene.water[i]) v = 0.04;
      if (scene.road[i]) v = 0.5;
      if (fire.labeled(i)) {
        mask[i] = 1.0f;
        if (fire.burning(i)) {
          v = 0.82 + 0.18 * sensor.uniform();
        } else {
          const double since = fire.age(i) - params.burn_duration;
          v = scene.background[i] + params.burnt_contrast + 0.45 * std::exp(-since / params.cooling_frames);
        }
      }
      frame[i] = static_cast<float>(v);
    }
    for (const Flare& f : flares) {
      for (std::int64_t dy = -f.radius; dy <= f.radius; ++dy)
        for (std::int64_t dx = -f.radius; dx <= f.radius; ++dx) {
          const std::int64_t x = f.x + dx, y = f.y + dy;
          if (dx * dx + dy * dy > f.radius * f.radius) continue;
          if (x < 0 || y < 0 || x >= static_cast<std::int64_t>(w) || y >= static_cast<std::int64_t>(h)) continue;
          frame[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 0.97f;
        }
    }
    // Irwin-Hall(3) sensor noise, scaled to the requested standard deviation.
    for (std::size_t i = 0; i < n; ++i) {
      const double u = sensor.uniform() + sensor.uniform() + sensor.uniform() - 1.5;
      frame[i] = static_cast<float>(std::clamp(frame[i] + 2.0 * params.sensor_noise * u, 0.0, 1.0));
    }
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(std::move(mask));

    for (Flare& f : flares) --f.frames_left;
    std::erase_if(flares, [](const Flare& f) { return f.frames_left <= 0; });
    if (clip.has_fire) fire.advance();
  }
  return clip;
}

/// Seed of clip `index` in a dataset with master seed `master`.
inline std::uint64_t clip_seed(std::uint64_t master, std::size_t index) {
  return derive_seed(master, index, 0x636c6970);  // "clip"
}

/// Exactly round(no_fire_fraction * count) clips without fire, chosen by a
/// seeded shuffle. Threads only change speed, never the result.
inline std::vector<Clip> generate_dataset(const GenParams& params, std::size_t count,
                                          std::uint64_t master_seed, unsigned threads = 1) {
  params.validate();
  const auto no_fire = static_cast<std::size_t>(std::llround(params.no_fire_fraction * static_cast<double>(count)));
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng(derive_seed(master_seed, 0, 0x6e6f6669)).shuffle(order.begin(), order.end());  // "nofi"
  std::vector<bool> fire(count, true);
  for (std::size_t k = 0; k < no_fire; ++k) fire[order[k]] = false;

  std::vector<Clip> clips(count);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < count; i += stride)
      clips[i] = generate_clip(params, clip_seed(master_seed, i), static_cast<bool>(fire[i]));
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return clips;
}

}  // namespace fireline
