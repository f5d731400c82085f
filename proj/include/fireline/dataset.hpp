#pragma once

// On-disk clip layout:
//   root/clip_00042/{clip.json, frame_0000.pgm..., mask_0000.pgm...}

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fireline/netpbm.hpp"
#include "fireline/synth.hpp"

namespace fireline {

inline constexpr int kClipFormatVersion = 1;

namespace dataset_detail {

inline std::string indexed(const char* stem, std::size_t i, const char* ext, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%0*zu%s", stem, digits, i, ext);
  return buf;
}

inline std::uint8_t quantize(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

inline netpbm::Image to_image(const Tensor<float>& t) {
  netpbm::Image img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) img.pixels[i] = quantize(t[i]);
  return img;
}

inline Tensor<float> from_image(const netpbm::Image& img, const std::filesystem::path& path) {
  if (img.channels != 1) throw DataError(path.string() + ": expected a grayscale PGM");
  Tensor<float> t({1, img.height, img.width});
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(static_cast<double>(img.pixels[i]) / img.maxval);
  return t;
}

}  // namespace dataset_detail

inline std::string frame_file(std::size_t i) { return dataset_detail::indexed("frame", i, ".pgm"); }
inline std::string mask_file(std::size_t i) { return dataset_detail::indexed("mask", i, ".pgm"); }
inline std::string clip_dir_name(std::size_t i) { return dataset_detail::indexed("clip", i, "", 5); }

/// Binary mask to PGM bytes {0, 255}.
inline netpbm::Image mask_image(const Tensor<float>& mask) {
  netpbm::Image img;
  img.height = mask.dim(1);
  img.width = mask.dim(2);
  img.pixels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] >= 0.5f ? 255 : 0;
  return img;
}

inline nlohmann::json clip_metadata(const Clip& clip) {
  nlohmann::json params = clip.params;
  params["has_fire"] = clip.has_fire;
  return {{"format_version", kClipFormatVersion},
          {"seed", clip.seed},
          {"height", clip.height()},
          {"width", clip.width()},
          {"length", clip.length()},
          {"params", params}};
}

inline void save_clip(const Clip& clip, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t t = 0; t < clip.length(); ++t) {
    netpbm::write(dir / frame_file(t), dataset_detail::to_image(clip.frames[t]));
    netpbm::write(dir / mask_file(t), mask_image(clip.masks[t]));
  }
  std::ofstream meta(dir / "clip.json", std::ios::trunc);
  if (!meta) throw DataError("cannot write " + (dir / "clip.json").string());
  meta << clip_metadata(clip).dump(2) << '\n';
}

namespace dataset_detail {

inline std::string describe_gaps(const std::vector<std::size_t>& missing) {
  std::string s;
  for (std::size_t k = 0; k < missing.size() && k < 16; ++k) s += (k ? ", " : "") + std::to_string(missing[k]);
  if (missing.size() > 16) s += ", ... (" + std::to_string(missing.size()) + " total)";
  return s;
}

}  // namespace dataset_detail

/// Loads a clip directory. Masks round-trip exactly; frames to within 0.5/255.
inline Clip load_clip(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = dir / "clip.json";
  if (!fs::exists(meta_path)) throw InventoryError(dir.string() + ": missing clip.json");
  nlohmann::json meta;
  try {
    std::ifstream in(meta_path);
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  Clip clip;
  std::size_t length = 0, height = 0, width = 0;
  try {
    if (meta.at("format_version").get<int>() != kClipFormatVersion)
      throw DataError(meta_path.string() + ": unsupported format_version " + meta.at("format_version").dump());
    clip.seed = meta.at("seed").get<std::uint64_t>();
    length = meta.at("length").get<std::size_t>();
    height = meta.at("height").get<std::size_t>();
    width = meta.at("width").get<std::size_t>();
    nlohmann::json params = meta.at("params");
    clip.has_fire = params.value("has_fire", false);
    params.erase("has_fire");
    clip.params = gen_params_from_json(params);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }

  std::vector<std::size_t> missing_frames, missing_masks;
  for (std::size_t t = 0; t < length; ++t) {
    if (!fs::exists(dir / frame_file(t))) missing_frames.push_back(t);
    if (!fs::exists(dir / mask_file(t))) missing_masks.push_back(t);
  }
  if (!missing_frames.empty() || !missing_masks.empty()) {
    std::string msg = dir.string() + ": incomplete clip;";
    if (!missing_frames.empty()) msg += " missing frames [" + dataset_detail::describe_gaps(missing_frames) + "]";
    if (!missing_masks.empty()) msg += " missing masks [" + dataset_detail::describe_gaps(missing_masks) + "]";
    throw InventoryError(msg);
  }

  for (std::size_t t = 0; t < length; ++t) {
    const fs::path fp = dir / frame_file(t), mp = dir / mask_file(t);
    Tensor<float> frame = dataset_detail::from_image(netpbm::read(fp), fp);
    const netpbm::Image mimg = netpbm::read(mp);
    if (frame.dim(1) != height || frame.dim(2) != width)
      throw DataError(fp.string() + ": size " + std::to_string(frame.dim(2)) + "x" +
                      std::to_string(frame.dim(1)) + " does not match clip.json " +
                      std::to_string(width) + "x" + std::to_string(height));
    if (mimg.width != width || mimg.height != height || mimg.channels != 1)
      throw DataError(mp.string() + ": mask size does not match clip.json");
    Tensor<float> mask({1, height, width});
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const auto v = mimg.pixels[i];
      if (v != 0 && v != mimg.maxval)
        throw DataError(mp.string() + ": mask pixel " + std::to_string(i) + " is neither 0 nor maxval");
      mask[i] = v ? 1.0f : 0.0f;
    }
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(std::move(mask));
  }
  return clip;
}

/// Sorted clip_* subdirectories of a dataset root.
inline std::vector<std::filesystem::path> list_clips(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError(root.string() + ": not a dataset directory");
  std::set<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string().rfind("clip_", 0) == 0) dirs.insert(e.path());
  if (dirs.empty()) throw DataError(root.string() + ": contains no clip_* directories");
  return {dirs.begin(), dirs.end()};
}

inline void save_dataset(const std::vector<Clip>& clips, const std::filesystem::path& root) {
  for (std::size_t i = 0; i < clips.size(); ++i) save_clip(clips[i], root / clip_dir_name(i));
}

inline std::vector<Clip> load_dataset(const std::filesystem::path& root) {
  std::vector<Clip> clips;
  for (const auto& d : list_clips(root)) clips.push_back(load_clip(d));
  return clips;
}

}  // namespace fireline
