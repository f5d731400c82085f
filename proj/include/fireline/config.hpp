#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "fireline/error.hpp"

namespace fireline {

/// Declarative description of an encoder-decoder segmentation network.
/// Fully determines the architecture and the parameter count.
struct NetworkConfig {
  std::string name;  // preset key, empty for ad-hoc configs
  int depth = 4;
  int first_width = 64;
  int rest_width = 64;
  int input_channels = 1;
  std::vector<int> feedback_offsets;  // empty, or e.g. {1, 3, 5}
  int input_height = 128;
  int input_width = 128;

  bool has_feedback() const { return !feedback_offsets.empty(); }
  int max_offset() const { return feedback_offsets.empty() ? 0 : feedback_offsets.back(); }

  /// Width of encoder stage i; i == depth is the bottleneck.
  int stage_width(int i) const { return i == 0 ? first_width : rest_width; }

  std::vector<int> stage_widths() const {
    std::vector<int> w;
    for (int i = 0; i < depth; ++i) w.push_back(stage_width(i));
    return w;
  }

  /// Input channel names in assembly order: frame, then t-o for each offset.
  std::vector<std::string> channel_order() const {
    std::vector<std::string> order{"frame"};
    for (int o : feedback_offsets) order.push_back("t-" + std::to_string(o));
    return order;
  }

  void validate() const {
    if (depth < 1) throw ConfigError("depth must be positive, got " + std::to_string(depth));
    if (depth > 16) throw ConfigError("depth " + std::to_string(depth) + " is unreasonably large");
    if (first_width < 1 || rest_width < 1) throw ConfigError("stage widths must be positive");
    if (input_height < 1 || input_width < 1) throw ConfigError("input extents must be positive");
    for (std::size_t i = 0; i < feedback_offsets.size(); ++i) {
      if (feedback_offsets[i] < 1) throw ConfigError("feedback offsets must be positive");
      if (i > 0 && feedback_offsets[i] <= feedback_offsets[i - 1])
        throw ConfigError("feedback offsets must be strictly increasing");
    }
    if (input_channels != 1 + static_cast<int>(feedback_offsets.size()))
      throw ConfigError("input_channels is " + std::to_string(input_channels) + " but " +
                        std::to_string(feedback_offsets.size()) +
                        " feedback offsets require " +
                        std::to_string(1 + feedback_offsets.size()));
    const int divisor = 1 << depth;
    for (int extent : {input_height, input_width})
      if (extent % divisor != 0)
        throw ConfigError("input extent " + std::to_string(extent) + " is not divisible by " +
                          std::to_string(divisor) + " (2^depth for depth " +
                          std::to_string(depth) + ")");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

inline NetworkConfig with_feedback(NetworkConfig c, std::vector<int> offsets, std::string name) {
  c.feedback_offsets = std::move(offsets);
  c.input_channels = 1 + static_cast<int>(c.feedback_offsets.size());
  c.name = std::move(name);
  return c;
}

inline const std::vector<int>& paper_feedback_offsets() {
  static const std::vector<int> offsets{1, 3, 5};
  return offsets;
}

namespace presets {

/// Full-size network: 8 downsampling stages, 128 channels throughout.
inline NetworkConfig paper_basic() {
  return {"basic_unet", 8, 128, 128, 1, {}, 256, 256};
}
inline NetworkConfig paper_basic_prevpred() {
  return with_feedback(paper_basic(), paper_feedback_offsets(), "unet_prevpred");
}
/// Depth 8 -> 4; widths 64 for the first stage, 32 for the rest.
inline NetworkConfig paper_pruned() { return {"pruned", 4, 64, 32, 1, {}, 256, 256}; }
inline NetworkConfig paper_pruned_prevpred() {
  return with_feedback(paper_pruned(), paper_feedback_offsets(), "pruned_prevpred");
}

inline NetworkConfig desk_basic() { return {"desk_basic", 4, 64, 64, 1, {}, 128, 128}; }
inline NetworkConfig desk_basic_prevpred() {
  return with_feedback(desk_basic(), paper_feedback_offsets(), "desk_basic_prevpred");
}
inline NetworkConfig desk_pruned() { return {"desk_pruned", 3, 32, 16, 1, {}, 128, 128}; }
inline NetworkConfig desk_pruned_prevpred() {
  return with_feedback(desk_pruned(), paper_feedback_offsets(), "desk_pruned_prevpred");
}

inline const std::map<std::string, NetworkConfig (*)()>& registry() {
  static const std::map<std::string, NetworkConfig (*)()> r{
      {"basic_unet", paper_basic},
      {"unet_prevpred", paper_basic_prevpred},
      {"pruned", paper_pruned},
      {"pruned_prevpred", paper_pruned_prevpred},
      {"desk_basic", desk_basic},
      {"desk_basic_prevpred", desk_basic_prevpred},
      {"desk_pruned", desk_pruned},
      {"desk_pruned_prevpred", desk_pruned_prevpred},
  };
  return r;
}

inline bool exists(const std::string& key) { return registry().count(key) != 0; }

inline NetworkConfig get(const std::string& key) {
  auto it = registry().find(key);
  if (it == registry().end()) throw ConfigError("unknown preset '" + key + "'");
  return it->second();
}

/// Column heading used in benchmark tables.
inline std::string table_name(const NetworkConfig& c) {
  const bool pruned = c.name.find("pruned") != std::string::npos;
  if (pruned) return c.has_feedback() ? "Pruned + PrevPred" : "Pruned w/o PrevPred";
  return c.has_feedback() ? "UNet+ PrevPred" : "Basic UNet";
}

}  // namespace presets

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"name", c.name},
                     {"depth", c.depth},
                     {"first_width", c.first_width},
                     {"rest_width", c.rest_width},
                     {"input_channels", c.input_channels},
                     {"feedback_offsets", c.feedback_offsets},
                     {"input_height", c.input_height},
                     {"input_width", c.input_width},
                     {"channel_order", c.channel_order()}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  static const char* known[] = {"name",           "depth",            "first_width",
                                "rest_width",     "input_channels",   "feedback_offsets",
                                "input_height",   "input_width",      "channel_order"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ConfigError("unknown network config field '" + key + "'");
  try {
    c = NetworkConfig{};
    c.name = j.value("name", std::string{});
    c.depth = j.at("depth").get<int>();
    c.first_width = j.at("first_width").get<int>();
    c.rest_width = j.at("rest_width").get<int>();
    c.feedback_offsets = j.value("feedback_offsets", std::vector<int>{});
    c.input_channels = j.value("input_channels", 1 + static_cast<int>(c.feedback_offsets.size()));
    c.input_height = j.at("input_height").get<int>();
    c.input_width = j.at("input_width").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network config: ") + e.what());
  }
  if (j.contains("channel_order") &&
      j.at("channel_order").get<std::vector<std::string>>() != c.channel_order())
    throw ConfigError("network config channel_order does not match its feedback offsets");
  c.validate();
}

}  // namespace fireline
