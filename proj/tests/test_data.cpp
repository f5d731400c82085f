#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace fireline;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fireline_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

GenParams small_params(std::size_t length = 12) {
  GenParams p;
  p.height = p.width = 48;
  p.length = length;
  return p;
}

std::size_t area(const Tensor<float>& m) {
  std::size_t n = 0;
  for (float v : m.data()) n += v > 0.5f;
  return n;
}

std::string slurp(const fs::path& p) { return netpbm::read_bytes(p); }

}  // namespace

// ---- netpbm ----

TEST(Netpbm, RoundTrip) {
  netpbm::Image img{3, 2, 1, 255, {0, 1, 2, 253, 254, 255}};
  const auto back = netpbm::decode(netpbm::encode(img));
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.pixels, img.pixels);
  netpbm::Image rgb{1, 1, 3, 255, {255, 0, 0}};
  EXPECT_EQ(netpbm::encode(rgb).substr(0, 2), "P6");
  EXPECT_EQ(netpbm::decode(netpbm::encode(rgb)).channels, 3u);
}

TEST(Netpbm, CommentsInHeader) {
  const std::string bytes = std::string("P5\n# made by hand\n2 1\n# another\n255\n") + char(7) + char(9);
  const auto img = netpbm::decode(bytes);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{7, 9}));
}

TEST(Netpbm, MalformedHeaderReportsOffset) {
  struct Case {
    std::string bytes;
    std::size_t offset;
  };
  for (const auto& c : {Case{"P2\n1 1\n255\n", 0}, Case{"P5\nx 1\n255\n", 3}, Case{"P5\n1 1\n300\n", 7},
                        Case{"P5\n2 2\n255\n\x01\x02", 13}}) {
    try {
      netpbm::decode(c.bytes);
      ADD_FAILURE() << "accepted " << c.bytes;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.offset(), c.offset) << e.what();
      EXPECT_NE(std::string(e.what()).find("byte offset " + std::to_string(c.offset)), std::string::npos);
    }
  }
}

// ---- generator ----

TEST(Generator, Deterministic) {
  const auto a = generate_clip(small_params(), 42), b = generate_clip(small_params(), 42);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.masks, b.masks);
  const auto c = generate_clip(small_params(), 43);
  EXPECT_NE(a.frames, c.frames);
}

TEST(Generator, ShapesAndRanges) {
  const auto clip = generate_clip(small_params(), 1, true);
  ASSERT_EQ(clip.length(), 12u);
  ASSERT_EQ(clip.masks.size(), 12u);
  for (std::size_t t = 0; t < clip.length(); ++t) {
    EXPECT_EQ(clip.frames[t].shape(), (Shape{1, 48, 48}));
    for (float v : clip.frames[t].data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    for (float v : clip.masks[t].data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  }
  EXPECT_GT(area(clip.masks.back()), 0u);
}

TEST(Generator, AllNoFire) {
  GenParams p = small_params();
  p.no_fire_fraction = 1.0;
  for (const auto& clip : generate_dataset(p, 6, 3)) {
    EXPECT_FALSE(clip.has_fire);
    for (const auto& m : clip.masks) EXPECT_EQ(area(m), 0u);
  }
}

TEST(Generator, DefaultParamsSeedSevenMonotone) {
  GenParams p;
  const auto clip = generate_clip(p, 7, true);
  ASSERT_EQ(clip.length(), 150u);
  for (std::size_t t = 0; t + 1 < clip.length(); ++t) {
    EXPECT_LE(area(clip.masks[t]), area(clip.masks[t + 1])) << t;
    for (std::size_t i = 0; i < clip.masks[t].size(); ++i) {
      if (clip.masks[t][i] > 0.5f) {
        ASSERT_GT(clip.masks[t + 1][i], 0.5f) << "frame " << t << " pixel " << i;
      }
    }
  }
}

TEST(Generator, DistractorsNeverLabeled) {
  GenParams p = small_params(20);
  p.flare_rate = 0.8;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto clip = generate_clip(p, seed, true);
    const auto scene = synth::build_scene(p, seed);
    for (const auto& m : clip.masks)
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i] > 0.5f) {
          ASSERT_FALSE(scene.water[i]);
          ASSERT_FALSE(scene.road[i]);
        }
    GenParams nf = p;
    nf.flares = false;
    EXPECT_EQ(generate_clip(nf, seed, true).masks, clip.masks);
  }
}

TEST(Generator, DistractorsRenderWithoutFire) {
  GenParams with = small_params(10), without = small_params(10);
  with.no_fire_fraction = without.no_fire_fraction = 1.0;
  with.flare_rate = 1.0;
  without.roads = without.water = without.flares = false;
  const auto a = generate_clip(with, 5), b = generate_clip(without, 5);
  EXPECT_EQ(a.masks, b.masks);
  for (const auto& m : a.masks) EXPECT_EQ(area(m), 0u);
  // histograms differ: bright (road, flare) and dark (water) pixels appear
  auto count = [](const Clip& c, float lo, float hi) {
    std::size_t n = 0;
    for (const auto& f : c.frames)
      for (float v : f.data()) n += v >= lo && v <= hi;
    return n;
  };
  EXPECT_GT(count(a, 0.45f, 1.0f), count(b, 0.45f, 1.0f));
  EXPECT_GT(count(a, 0.0f, 0.08f), count(b, 0.0f, 0.08f));
}

TEST(Generator, NoFireFractionExact) {
  for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    GenParams p = small_params(2);
    p.no_fire_fraction = frac;
    const auto clips = generate_dataset(p, 20, 11);
    const auto no_fire = std::count_if(clips.begin(), clips.end(), [](const Clip& c) { return !c.has_fire; });
    EXPECT_EQ(no_fire, std::llround(frac * 20)) << frac;
  }
}

TEST(Generator, ThreadCountDoesNotChangeDataset) {
  const auto a = generate_dataset(small_params(4), 6, 9, 1), b = generate_dataset(small_params(4), 6, 9, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a[i].frames, b[i].frames);
    EXPECT_EQ(a[i].masks, b[i].masks);
  }
}

TEST(Generator, Validation) {
  GenParams p;
  p.height = 16;
  EXPECT_THROW(generate_clip(p, 0), ConfigError);
  p = {};
  p.spread_probability = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.no_fire_fraction = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_EQ(GenParams{}.no_fire_fraction, 0.75);
  EXPECT_THROW(gen_params_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
}

// ---- on-disk format ----

TEST(Dataset, ClipInventory) {
  const auto dir = scratch_dir("inv");
  save_clip(generate_clip(small_params(3), 1), dir / "clip_00000");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "clip_00000")) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"clip.json", "frame_0000.pgm", "frame_0001.pgm", "frame_0002.pgm",
                                             "mask_0000.pgm", "mask_0001.pgm", "mask_0002.pgm"}));
  const auto meta = nlohmann::json::parse(slurp(dir / "clip_00000" / "clip.json"));
  for (const char* k : {"seed", "height", "width", "length", "params", "format_version"})
    EXPECT_TRUE(meta.contains(k)) << k;
  EXPECT_EQ(slurp(dir / "clip_00000" / "frame_0000.pgm").substr(0, 2), "P5");
}

TEST(Dataset, RoundTrip) {
  const auto dir = scratch_dir("rt");
  const auto clip = generate_clip(small_params(5), 2, true);
  save_clip(clip, dir / "c");
  const auto back = load_clip(dir / "c");
  EXPECT_EQ(back.masks, clip.masks);
  EXPECT_EQ(back.seed, clip.seed);
  EXPECT_EQ(back.params, clip.params);
  for (std::size_t t = 0; t < clip.length(); ++t)
    for (std::size_t i = 0; i < clip.frames[t].size(); ++i)
      ASSERT_LE(std::abs(back.frames[t][i] - clip.frames[t][i]), 1.0f / 510.0f + 1e-7f);
  // mask pixels are exactly 0 or 255 on disk
  const auto m = netpbm::read(dir / "c" / "mask_0004.pgm");
  for (auto v : m.pixels) EXPECT_TRUE(v == 0 || v == 255);
}

TEST(Dataset, SameSeedByteIdentical) {
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  save_dataset(generate_dataset(small_params(3), 3, 5), a);
  save_dataset(generate_dataset(small_params(3), 3, 5), b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 3u * 7u);
  EXPECT_EQ(load_dataset(a).size(), 3u);
}

TEST(Dataset, MissingFilesListed) {
  const auto dir = scratch_dir("gaps");
  save_clip(generate_clip(small_params(6), 1), dir / "c");
  fs::remove(dir / "c" / "frame_0002.pgm");
  fs::remove(dir / "c" / "frame_0003.pgm");
  fs::remove(dir / "c" / "mask_0005.pgm");
  try {
    load_clip(dir / "c");
    FAIL();
  } catch (const InventoryError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("2"), std::string::npos) << m;
    EXPECT_NE(m.find("3"), std::string::npos) << m;
    EXPECT_NE(m.find("5"), std::string::npos) << m;
  }
}

TEST(Dataset, CorruptFrameIsParseError) {
  const auto dir = scratch_dir("corrupt");
  save_clip(generate_clip(small_params(2), 1), dir / "c");
  netpbm::write_bytes(dir / "c" / "frame_0001.pgm", "P5\n48 48\n255\nshort");
  try {
    load_clip(dir / "c");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("frame_0001.pgm"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
}

// ---- augmentation ----

TEST(Augment, IdentityWhenDisabled) {
  const auto clip = generate_clip(small_params(4), 3, true);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto a = augment(clip.frames[3], clip.masks[3], {clip.masks[2], clip.masks[0]}, AugmentConfig::none(), rng);
    EXPECT_FALSE(a.geometric);
    EXPECT_EQ(a.frame, clip.frames[3]);
    EXPECT_EQ(a.mask, clip.masks[3]);
    EXPECT_EQ(a.feedback[0], clip.masks[2]);
    EXPECT_EQ(a.feedback[1], clip.masks[0]);
  }
}

TEST(Augment, GateRate) {
  Rng rng(2024);
  const Tensor<float> f({1, 32, 32}, 0.5f), m({1, 32, 32});
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += augment(f, m, {}, AugmentConfig{}, rng).geometric;
  EXPECT_GE(hits, 800);
  EXPECT_LE(hits, 1200);
}

TEST(Augment, EmptyMaskRule) {
  const auto clip = generate_clip(small_params(8), 3, true);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.empty_mask_probability = 1.0;
  Rng rng(3);
  const auto a = augment(clip.frames[7], clip.masks[7], {clip.masks[6], clip.masks[4], clip.masks[2]}, cfg, rng);
  for (const auto& fb : a.feedback) EXPECT_EQ(area(fb), 0u);
  EXPECT_EQ(a.mask, clip.masks[7]);
}

TEST(Augment, PreservesBinarityAndAlignment) {
  AugmentConfig cfg;
  cfg.apply_probability = 1.0;
  cfg.salt_pepper_density = 0.0;
  cfg.small_perturb_probability = 0.5;
  cfg.large_perturb_probability = 0.2;
  Rng rng(8);
  const Tensor<float> ones({1, 48, 48}, 1.0f);
  const auto clip = generate_clip(small_params(8), 4, true);
  for (int i = 0; i < 200; ++i) {
    const auto a = augment(ones, ones, {clip.masks[5]}, cfg, rng);
    ASSERT_TRUE(a.geometric);
    for (std::size_t k = 0; k < ones.size(); ++k) {
      ASSERT_TRUE(a.mask[k] == 0.0f || a.mask[k] == 1.0f);
      ASSERT_EQ(a.frame[k] > 0.0f, a.mask[k] > 0.0f) << "support differs at " << k;
    }
    for (float v : a.feedback[0].data()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
  }
}

TEST(Augment, SaltAndPepperOnFrameOnly) {
  AugmentConfig cfg = AugmentConfig::none();
  cfg.apply_probability = 1.0;
  cfg.scale_min = cfg.scale_max = 1.0;
  cfg.rotation_deg = cfg.shear_deg = 0.0;
  cfg.flip_probability = 0.0;
  cfg.salt_pepper_density = 0.05;
  Rng rng(6);
  const Tensor<float> f({1, 40, 40}, 0.3f);
  const auto clip = generate_clip(small_params(3), 2, true);
  Tensor<float> m({1, 40, 40});
  const auto a = augment(f, m, {}, cfg, rng);
  std::size_t salt = 0, pepper = 0;
  for (float v : a.frame.data()) salt += v == 1.0f, pepper += v == 0.0f;
  EXPECT_GT(salt, 20u);
  EXPECT_GT(pepper, 20u);
  EXPECT_EQ(a.mask, m);
}

TEST(Augment, Deterministic) {
  const auto clip = generate_clip(small_params(6), 3, true);
  AugmentConfig cfg;
  cfg.apply_probability = 0.5;
  auto run = [&] {
    Rng rng(77);
    std::vector<Tensor<float>> out;
    for (int i = 0; i < 20; ++i) {
      auto a = augment(clip.frames[5], clip.masks[5], {clip.masks[4]}, cfg, rng);
      out.push_back(a.frame);
      out.push_back(a.feedback[0]);
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Augment, ConfigValidation) {
  AugmentConfig c;
  EXPECT_EQ(c.apply_probability, 0.10);
  EXPECT_DOUBLE_EQ(c.scale_min, 1 / 1.05);
  EXPECT_EQ(c.shear_deg, 5.0);
  c.apply_probability = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}
