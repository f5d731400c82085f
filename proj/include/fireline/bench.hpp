#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fireline/config.hpp"
#include "fireline/network.hpp"
#include "fireline/streaming.hpp"
#include "fireline/train.hpp"

namespace fireline {

struct FpsOptions {
  int repetitions = 5;
  int warmup = 2;
  std::size_t frames_per_rep = 4;

  void validate() const {
    if (repetitions < 5) throw ConfigError("fps measurement needs >= 5 repetitions");
    if (warmup < 2) throw ConfigError("fps measurement needs >= 2 warmup repetitions");
    if (frames_per_rep < 1) throw ConfigError("frames_per_rep must be >= 1");
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Deterministic preloaded frames at the network's resolution.
inline std::vector<Tensor<float>> bench_frames(const NetworkConfig& c, std::size_t count, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<Tensor<float>> frames;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor<float> f({1, static_cast<std::size_t>(c.input_height), static_cast<std::size_t>(c.input_width)});
    for (auto& v : f.data()) v = static_cast<float>(rng.uniform());
    frames.push_back(std::move(f));
  }
  return frames;
}

/// Median frames-per-second of sequential eval-mode inference, batch 1.
/// Feedback-channel assembly is inside the timed region; I/O is not.
template <typename Model>
double measure_fps(const Model& net, const FpsOptions& opt = {}) {
  opt.validate();
  using clock = std::chrono::steady_clock;
  const auto frames = bench_frames(net.config(), opt.frames_per_rep);
  auto run_rep = [&] {
    const auto t0 = clock::now();
    if (net.config().has_feedback()) {
      StreamState<Model> s(net);
      for (const auto& f : frames) s.push_frame(f);
    } else {
      for (const auto& f : frames) (void)net.predict(f.reshaped({1, 1, f.dim(1), f.dim(2)}));
    }
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  for (int i = 0; i < opt.warmup; ++i) {
    const double secs = run_rep();
    const double tick = static_cast<double>(clock::period::num) / clock::period::den;
    if (tick > 0.01 * secs / static_cast<double>(opt.frames_per_rep))
      throw UsageError("timer resolution is coarser than 1% of one forward pass; use more frames per repetition");
  }
  std::vector<double> fps;
  for (int i = 0; i < opt.repetitions; ++i) fps.push_back(static_cast<double>(opt.frames_per_rep) / run_rep());
  return median(std::move(fps));
}

/// One (config, seed) cell of the benchmark.
struct BenchCell {
  std::string config;
  std::string name;  // table column heading
  std::size_t params = 0;
  std::uint64_t seed = 0;
  double fps = 0;
  double f1 = 0;
  std::string error;  // non-empty when training failed

  bool ok() const { return error.empty(); }
};

/// Median-of-seeds summary of one configuration.
struct BenchRow {
  std::string config;
  std::string name;
  std::size_t params = 0;
  double fps = 0;
  double f1 = 0;
  std::size_t seeds_ok = 0;
};

struct BenchmarkReport {
  std::vector<BenchCell> cells;
  std::vector<BenchRow> rows;
  unsigned threads = 1;
  std::string precision = "float32";

  const BenchRow& row(const std::string& config) const {
    for (const auto& r : rows)
      if (r.config == config) return r;
    throw UsageError("report has no row for '" + config + "'");
  }

  bool operator==(const BenchmarkReport& o) const {
    auto cell_eq = [](const BenchCell& a, const BenchCell& b) {
      // a failed cell's numbers carry no meaning
      return a.config == b.config && a.name == b.name && a.params == b.params && a.seed == b.seed &&
             a.ok() == b.ok() && (!a.ok() || (a.fps == b.fps && a.f1 == b.f1));
    };
    auto row_eq = [](const BenchRow& a, const BenchRow& b) {
      return a.config == b.config && a.name == b.name && a.params == b.params && a.fps == b.fps && a.f1 == b.f1;
    };
    return std::equal(cells.begin(), cells.end(), o.cells.begin(), o.cells.end(), cell_eq) &&
           std::equal(rows.begin(), rows.end(), o.rows.begin(), o.rows.end(), row_eq);
  }
};

/// Desk column order of the table.
inline std::vector<std::string> desk_table_configs() {
  return {"desk_basic", "desk_basic_prevpred", "desk_pruned", "desk_pruned_prevpred"};
}

inline void summarize(BenchmarkReport& rep) {
  rep.rows.clear();
  std::vector<std::string> order;
  for (const auto& c : rep.cells)
    if (std::find(order.begin(), order.end(), c.config) == order.end()) order.push_back(c.config);
  for (const auto& cfg : order) {
    BenchRow row;
    row.config = cfg;
    std::vector<double> fps, f1;
    for (const auto& c : rep.cells) {
      if (c.config != cfg) continue;
      row.name = c.name;
      row.params = c.params;
      if (!c.ok()) continue;
      fps.push_back(c.fps);
      f1.push_back(c.f1);
    }
    row.seeds_ok = fps.size();
    if (!fps.empty()) {
      row.fps = median(fps);
      row.f1 = median(f1);
    }
    rep.rows.push_back(row);
  }
}

namespace bench_detail {

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace bench_detail

/// config,name,params,fps,f1,seed; per-seed cells then median rows
/// (seed "median"). Failed cells carry fps and f1 "nan".
inline std::string report_csv(const BenchmarkReport& rep) {
  using bench_detail::num;
  std::string out = "config,name,params,fps,f1,seed\n";
  for (const auto& c : rep.cells)
    out += c.config + "," + c.name + "," + std::to_string(c.params) + "," + (c.ok() ? num(c.fps) : "nan") + "," +
           (c.ok() ? num(c.f1) : "nan") + "," + std::to_string(c.seed) + "\n";
  for (const auto& r : rep.rows)
    out += r.config + "," + r.name + "," + std::to_string(r.params) + "," + num(r.fps) + "," + num(r.f1) +
           ",median\n";
  return out;
}

inline BenchmarkReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "config,name,params,fps,f1,seed")
    throw DataError("benchmark CSV: unexpected header");
  BenchmarkReport rep;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw DataError("benchmark CSV line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      if (f[5] == "median") {
        BenchRow r{f[0], f[1], std::stoull(f[2]), std::stod(f[3]), std::stod(f[4]), 0};
        rep.rows.push_back(r);
      } else {
        BenchCell c{f[0], f[1], std::stoull(f[2]), std::stoull(f[5]), 0, 0, ""};
        if (f[3] == "nan") c.error = "failed";
        else c.fps = std::stod(f[3]), c.f1 = std::stod(f[4]);
        rep.cells.push_back(c);
      }
    } catch (const std::logic_error&) {
      throw DataError("benchmark CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rep;
}

inline std::string report_text(const BenchmarkReport& rep) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %-20s %10s %10s %8s %6s\n", "config", "model", "params", "fps", "F1", "seeds");
  out += buf;
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%-22s %-20s %10zu %10.2f %8.2f %6zu\n", r.config.c_str(), r.name.c_str(), r.params,
                  r.fps, r.f1, r.seeds_ok);
    out += buf;
  }
  out += "\nper seed:\n";
  for (const auto& c : rep.cells) {
    if (c.ok())
      std::snprintf(buf, sizeof buf, "  %-22s seed %-6llu fps %8.2f  F1 %6.2f\n", c.config.c_str(),
                    static_cast<unsigned long long>(c.seed), c.fps, c.f1);
    else
      std::snprintf(buf, sizeof buf, "  %-22s seed %-6llu FAILED: %s\n", c.config.c_str(),
                    static_cast<unsigned long long>(c.seed), c.error.c_str());
    out += buf;
  }
  out += "\nthreads " + std::to_string(rep.threads) + ", precision " + rep.precision + "\n";
  return out;
}

struct DirectionalCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr double kMinPrunedSpeedup = 2.0;
inline constexpr double kMaxPrevPredOverhead = 0.40;

/// The three ordering checks on a desk report.
inline std::vector<DirectionalCheck> directional_checks(const BenchmarkReport& rep) {
  std::vector<DirectionalCheck> out;
  char buf[256];
  {
    std::size_t wins = 0, paired = 0;
    for (const auto& pp : rep.cells) {
      if (pp.config != "desk_pruned_prevpred" || !pp.ok()) continue;
      for (const auto& p : rep.cells)
        if (p.config == "desk_pruned" && p.seed == pp.seed && p.ok()) {
          ++paired;
          wins += pp.f1 > p.f1;
        }
    }
    std::size_t seeds = 0;
    for (const auto& c : rep.cells) seeds += c.config == "desk_pruned_prevpred";
    const std::size_t need = seeds / 2 + 1;
    std::snprintf(buf, sizeof buf, "PrevPred F1 wins in %zu of %zu seeds (need %zu)", wins, seeds, need);
    out.push_back({"prevpred_f1", paired == seeds && wins >= need, buf});
  }
  auto fps = [&](const char* c) { return rep.row(c).fps; };
  {
    const double ratio = fps("desk_basic") > 0 ? fps("desk_pruned") / fps("desk_basic") : 0;
    std::snprintf(buf, sizeof buf, "pruned/basic fps ratio %.2f (need >= %.1f)", ratio, kMinPrunedSpeedup);
    out.push_back({"pruned_speedup", ratio >= kMinPrunedSpeedup, buf});
  }
  {
    const double ob = fps("desk_basic") > 0 ? 1 - fps("desk_basic_prevpred") / fps("desk_basic") : 1;
    const double op = fps("desk_pruned") > 0 ? 1 - fps("desk_pruned_prevpred") / fps("desk_pruned") : 1;
    std::snprintf(buf, sizeof buf, "PrevPred fps overhead basic %.1f%%, pruned %.1f%% (need <= %.0f%%)", 100 * ob,
                  100 * op, 100 * kMaxPrevPredOverhead);
    out.push_back({"prevpred_overhead", ob <= kMaxPrevPredOverhead && op <= kMaxPrevPredOverhead, buf});
  }
  return out;
}

/// Training plan per (config, seed). The default keeps the full desk plan for
/// the pruned pair and a shorter one for the larger basic networks, whose
/// accuracy no check depends on.
using PlanFor = std::function<TrainPlan(const NetworkConfig&, std::uint64_t seed)>;

inline TrainPlan default_bench_plan(const NetworkConfig& c, std::uint64_t seed) {
  TrainPlan p = desk_plan(seed);
  if (c.name.find("pruned") == std::string::npos) {
    p.epochs = 3;
    p.frames_per_epoch = 32;
    p.clips_per_epoch = 2;
    p.val_clips_per_epoch = 2;
  }
  return p;
}

struct Table1Options {
  std::vector<std::string> configs = desk_table_configs();
  std::vector<std::uint64_t> seeds{0, 1, 2};
  PlanFor plan_for = default_bench_plan;
  LossConfig loss;
  AdamConfig adam = desk_adam();
  AugmentConfig augment;
  FpsOptions fps;
  unsigned threads = 1;
  std::function<void(const std::string&)> log;
};

/// Trains every config from scratch per seed, evaluates on the held-out
/// clips, and measures throughput. A diverged cell is recorded and skipped.
inline BenchmarkReport run_table1(const std::vector<const Clip*>& train_clips, const std::vector<const Clip*>& val_clips,
                                  const Table1Options& opt) {
  if (opt.seeds.empty()) throw UsageError("benchmark needs at least one seed");
  BenchmarkReport rep;
  rep.threads = opt.threads;
  for (const auto& key : opt.configs) {
    const NetworkConfig nc = presets::get(key);
    for (std::uint64_t seed : opt.seeds) {
      BenchCell cell{key, presets::table_name(nc), param_count(nc), seed, 0, 0, ""};
      const auto t0 = std::chrono::steady_clock::now();
      try {
        TrainPlan plan = opt.plan_for(nc, seed);
        plan.eval_threads = opt.threads;
        auto net = SegmentationNetwork<float>::build(nc, derive_seed(seed, 0, 0x696e6974));  // "init"
        train(net, train_clips, val_clips, plan, opt.loss, opt.adam, opt.augment);
        cell.f1 = evaluate(net, val_clips, opt.loss, opt.threads).f1;
        cell.fps = measure_fps(net, opt.fps);
      } catch (const NumericError& e) {
        cell.error = e.what();
      }
      if (opt.log) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s seed %llu: F1 %.2f fps %.2f (%.0f s)%s%s", key.c_str(),
                      static_cast<unsigned long long>(seed), cell.f1, cell.fps,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                      cell.ok() ? "" : " FAILED: ", cell.error.c_str());
        opt.log(buf);
      }
      rep.cells.push_back(cell);
    }
  }
  summarize(rep);
  return rep;
}

/// Exclusive advisory lock; refuses immediately when another holder exists.
class BenchLock {
 public:
  explicit BenchLock(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw DataError("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw UsageError("another benchmark holds the lock " + path.string());
    }
  }
  ~BenchLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  BenchLock(const BenchLock&) = delete;
  BenchLock& operator=(const BenchLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

inline std::filesystem::path default_lock_path() {
  if (const char* p = std::getenv("FIRELINE_BENCH_LOCK")) return p;
  return std::filesystem::temp_directory_path() / "fireline-bench.lock";
}

}  // namespace fireline
