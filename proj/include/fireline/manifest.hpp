#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fireline/error.hpp"

#ifndef FIRELINE_VERSION
#define FIRELINE_VERSION "0.0.0"
#endif

namespace fireline {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Record of one CLI run, written as manifest.json in its output directory.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();  // every resolved setting
  std::uint64_t seed = 0;
  nlohmann::json artifacts = nlohmann::json::array();
  std::string version = FIRELINE_VERSION;
  std::string started = utc_timestamp();
  std::string finished;

  nlohmann::json to_json() const {
    return {{"command", command}, {"config", config},   {"seed", seed},          {"artifacts", artifacts},
            {"version", version}, {"started", started}, {"finished", finished}};
  }

  void write(const std::filesystem::path& dir) {
    finished = utc_timestamp();
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
    out << to_json().dump(2) << '\n';
  }
};

}  // namespace fireline
