// fireline command-line tool: synth, train, infer, bench.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fireline/fireline.hpp"

namespace fs = std::filesystem;
using namespace fireline;

namespace {

constexpr int kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitAcceptance = 4, kExitInternal = 5;

/// FIRELINE_THREADS, or `fallback` when unset.
unsigned env_threads(unsigned fallback = 1) {
  const char* v = std::getenv("FIRELINE_THREADS");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end || n < 1) throw UsageError(std::string("FIRELINE_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<unsigned>(n);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void require_empty_or_force(const fs::path& out, bool force) {
  if (!fs::exists(out)) return;
  if (!fs::is_directory(out)) throw UsageError(out.string() + " exists and is not a directory");
  if (fs::is_empty(out)) return;
  if (!force) throw UsageError(out.string() + " is not empty (pass --force to overwrite)");
}

nlohmann::json adam_json(const AdamConfig& a) {
  return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1},           {"beta2", a.beta2},
          {"weight_decay", a.weight_decay},   {"numeric_floor", a.numeric_floor}};
}

nlohmann::json loss_json(const LossConfig& l) { return {{"kind", to_string(l.kind)}, {"epsilon", l.epsilon}}; }

// ---------------------------------------------------------------- synth

struct SynthArgs {
  fs::path out;
  std::size_t clips = 32;
  GenParams gen = desk_gen_params();
  std::string size = "128x128";
  std::uint64_t seed = 0;
  bool force = false;
  bool no_roads = false, no_water = false, no_flares = false;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic IR wildfire dataset");
  c->add_option("--out", a.out, "Dataset directory")->required();
  c->add_option("--clips", a.clips, "Number of clips")->check(CLI::PositiveNumber);
  c->add_option("--frames", a.gen.length, "Frames per clip")->check(CLI::PositiveNumber);
  c->add_option("--size", a.size, "Frame size HxW");
  c->add_option("--seed", a.seed, "Master seed");
  c->add_option("--no-fire-frac", a.gen.no_fire_fraction, "Fraction of clips without fire")->check(CLI::Range(0.0, 1.0));
  c->add_option("--ignitions", a.gen.ignitions, "Ignition points per fire clip");
  c->add_option("--spread", a.gen.spread_probability, "Per-step spread probability");
  c->add_option("--burnt-contrast", a.gen.burnt_contrast, "Burnt-area intensity above terrain once cooled");
  c->add_option("--sensor-noise", a.gen.sensor_noise, "Sensor noise standard deviation");
  c->add_flag("--no-roads", a.no_roads, "Disable road distractors");
  c->add_flag("--no-water", a.no_water, "Disable water distractors");
  c->add_flag("--no-flares", a.no_flares, "Disable flare distractors");
  c->add_flag("--force", a.force, "Overwrite a non-empty output directory");
}

int run_synth(SynthArgs a) {
  const auto x = a.size.find('x');
  if (x == std::string::npos) throw UsageError("--size must look like HxW, got '" + a.size + "'");
  try {
    a.gen.height = std::stoul(a.size.substr(0, x));
    a.gen.width = std::stoul(a.size.substr(x + 1));
  } catch (const std::logic_error&) {
    throw UsageError("--size must look like HxW, got '" + a.size + "'");
  }
  a.gen.roads = !a.no_roads;
  a.gen.water = !a.no_water;
  a.gen.flares = !a.no_flares;
  a.gen.validate();
  require_empty_or_force(a.out, a.force);
  if (fs::exists(a.out))
    for (const auto& e : fs::directory_iterator(a.out))
      if (e.path().filename().string().rfind("clip_", 0) == 0 || e.path().filename() == "manifest.json")
        fs::remove_all(e.path());
  fs::create_directories(a.out);

  RunManifest m;
  m.command = "synth";
  m.seed = a.seed;
  m.config = {{"clips", a.clips}, {"generator", a.gen}};
  const auto clips = generate_dataset(a.gen, a.clips, a.seed, env_threads());
  save_dataset(clips, a.out);
  for (std::size_t i = 0; i < clips.size(); ++i) m.artifacts.push_back(clip_dir_name(i));
  m.write(a.out);
  std::size_t fire = 0;
  for (const auto& c : clips) fire += c.has_fire;
  std::cout << "wrote " << clips.size() << " clips (" << fire << " with fire) to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path data, out;
  std::string config;
  std::optional<std::uint64_t> seed;
  TrainPlan plan;
  AdamConfig adam;
  LossConfig loss;
  std::string loss_kind = "dice";
  std::size_t val_clips = 0;
  bool no_augment = false, no_timing = false, force = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train a network from scratch");
  c->add_option("--data", a.data, "Dataset directory")->required();
  c->add_option("--config", a.config, "Preset name or network config JSON file")->required();
  c->add_option("--out", a.out, "Run directory")->required();
  c->add_option("--seed", a.seed, "Seed (required)");
  c->add_option("--epochs", a.plan.epochs, "Epochs");
  c->add_option("--batch-size", a.plan.batch_size, "Batch size");
  c->add_option("--teacher-forcing", a.plan.teacher_forcing_epochs,
                "Epochs fed ground-truth feedback masks (-1: first 20% of epochs)");
  c->add_option("--clips-per-epoch", a.plan.clips_per_epoch, "Training clips sampled per epoch (0: all)");
  c->add_option("--frames-per-epoch", a.plan.frames_per_epoch, "Frames sampled per epoch (0: all)");
  c->add_option("--val-clips", a.val_clips, "Clips held out for validation (0: a quarter)");
  c->add_option("--val-clips-per-epoch", a.plan.val_clips_per_epoch, "Validation clips scored per epoch (0: all)");
  c->add_option("--lr", a.adam.learning_rate, "Initial learning rate");
  c->add_option("--beta1", a.adam.beta1, "Adam beta1");
  c->add_option("--beta2", a.adam.beta2, "Adam beta2");
  c->add_option("--adam-eps", a.adam.numeric_floor, "Adam denominator floor");
  c->add_option("--loss", a.loss_kind, "Loss: dice or bce")->check(CLI::IsMember({"dice", "bce"}));
  c->add_option("--dice-eps", a.loss.epsilon, "Dice smoothing epsilon");
  c->add_option("--patience", a.plan.plateau_patience, "Epochs without improvement before halving the rate");
  c->add_option("--lr-factor", a.plan.plateau_factor, "Learning-rate reduction factor");
  c->add_flag("--no-augment", a.no_augment, "Disable augmentation");
  c->add_flag("--no-timing", a.no_timing, "Write 0 seconds in the history (reproducible CSV)");
  c->add_flag("--force", a.force, "Overwrite a non-empty run directory");
}

NetworkConfig resolve_config(const std::string& spec) {
  if (presets::exists(spec)) return presets::get(spec);
  if (fs::is_regular_file(spec)) {
    std::ifstream in(spec);
    try {
      return nlohmann::json::parse(in).get<NetworkConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(spec + ": " + e.what());
    }
  }
  std::string names;
  for (const auto& [k, _] : presets::registry()) names += (names.empty() ? "" : ", ") + k;
  throw ConfigError("'" + spec + "' is neither a preset (" + names + ") nor a config file");
}

int run_train(TrainArgs a) {
  if (!a.seed) throw UsageError("train requires --seed (runs must be reproducible)");
  a.plan.seed = *a.seed;
  a.plan.augment = !a.no_augment;
  a.plan.record_time = !a.no_timing;
  a.plan.eval_threads = env_threads();
  a.loss.kind = parse_loss_kind(a.loss_kind);
  a.adam.validate();
  a.loss.validate();
  a.plan.validate();
  const NetworkConfig nc = resolve_config(a.config);

  const auto clips = load_dataset(a.data);
  for (const auto& c : clips)
    if (c.height() != static_cast<std::size_t>(nc.input_height) || c.width() != static_cast<std::size_t>(nc.input_width))
      throw ConfigError("config '" + nc.name + "' expects " + std::to_string(nc.input_height) + "x" +
                        std::to_string(nc.input_width) + " frames but the dataset has " + std::to_string(c.height()) +
                        "x" + std::to_string(c.width()));
  const std::size_t val = a.val_clips ? a.val_clips : default_val_count(clips.size());
  const Split split = split_clips(clips, val);

  require_empty_or_force(a.out, a.force);
  fs::create_directories(a.out);
  RunManifest m;
  m.command = "train";
  m.seed = a.plan.seed;
  m.config = {{"network", nc},          {"plan", a.plan},
              {"adam", adam_json(a.adam)}, {"loss", loss_json(a.loss)},
              {"augment", AugmentConfig{}}, {"data", fs::absolute(a.data).string()},
              {"train_clips", split.train.size()}, {"val_clips", split.val.size()},
              {"channel_order", nc.channel_order()}};

  auto net = SegmentationNetwork<float>::build(nc, derive_seed(a.plan.seed, 0, 0x696e6974));  // "init"
  std::cerr << nc.name << ": " << net.parameter_scalars() << " parameters, " << split.train.size() << " train / "
            << split.val.size() << " val clips\n";
  auto log = [](const EpochRecord& r) {
    std::fprintf(stderr, "epoch %3d  train %.4f  val %.4f  F1 %6.2f  lr %.3g  feedback %s  %.1fs\n", r.epoch,
                 r.train_loss, r.val_loss, r.val_f1, r.lr, to_string(r.feedback).c_str(), r.seconds);
  };
  const TrainResult res = train(net, split.train, split.val, a.plan, a.loss, a.adam, AugmentConfig{}, log);

  save_checkpoint(net, a.out / "final.ckpt", {{"epoch", a.plan.epochs}, {"kind", "final"}});
  auto best = net.clone();
  best.assign_named(res.best_state);
  save_checkpoint(best, a.out / "best.ckpt",
                  {{"epoch", res.best_epoch}, {"val_loss", res.best_val_loss}, {"kind", "best"}});
  write_text(a.out / "history.csv", history_csv(res.history));
  m.artifacts = {"best.ckpt", "final.ckpt", "history.csv"};
  m.config["best_epoch"] = res.best_epoch;
  m.write(a.out);
  std::cout << "best epoch " << res.best_epoch << " (val loss " << res.best_val_loss << "); wrote "
            << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  fs::path ckpt, clip, out;
  bool overlay = false, force = false;
};

void add_infer(CLI::App& app, InferArgs& a) {
  auto* c = app.add_subcommand("infer", "Predict fire masks for one clip");
  c->add_option("--ckpt", a.ckpt, "Checkpoint file")->required();
  c->add_option("--clip", a.clip, "Clip directory")->required();
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_flag("--overlay", a.overlay, "Also write PPM overlays with the predicted perimeter in red");
  c->add_flag("--force", a.force, "Overwrite a non-empty output directory");
}

int run_infer(const InferArgs& a) {
  const auto net = load_checkpoint(a.ckpt);
  const Clip clip = load_clip(a.clip);
  const auto& nc = net.config();
  if (clip.height() != static_cast<std::size_t>(nc.input_height) || clip.width() != static_cast<std::size_t>(nc.input_width))
    throw DataError("checkpoint expects " + std::to_string(nc.input_height) + "x" + std::to_string(nc.input_width) +
                    " frames but the clip has " + std::to_string(clip.height()) + "x" + std::to_string(clip.width()));
  require_empty_or_force(a.out, a.force);
  fs::create_directories(a.out);

  const auto pred = predict_clip(net, clip.frames);
  RunManifest m;
  m.command = "infer";
  m.config = {{"checkpoint", fs::absolute(a.ckpt).string()}, {"clip", fs::absolute(a.clip).string()},
              {"network", nc}, {"streaming", nc.has_feedback()}, {"threshold", kBinarizeThreshold},
              {"overlay", a.overlay}};
  for (std::size_t t = 0; t < clip.length(); ++t) {
    netpbm::write(a.out / mask_file(t), mask_image(pred.masks[t]));
    m.artifacts.push_back(mask_file(t));
    if (a.overlay) {
      const auto name = dataset_detail::indexed("overlay", t, ".ppm");
      netpbm::write(a.out / name, overlay(clip.frames[t], pred.masks[t]));
      m.artifacts.push_back(name);
    }
  }
  const TemporalReport tr = temporal_consistency(pred.masks, clip.masks);
  Confusion conf;
  for (std::size_t t = 0; t < clip.length(); ++t) conf += confusion(pred.masks[t], clip.masks[t]);
  m.config["temporal"] = {{"pred_iou", tr.pred_iou}, {"truth_iou", tr.truth_iou}, {"ratio", tr.ratio}};
  m.write(a.out);
  std::printf("%zu masks written (%s)\n", clip.length(), nc.has_feedback() ? "streaming" : "per-frame");
  std::printf("temporal consistency: predicted %.4f, truth %.4f, ratio %.4f\n", tr.pred_iou, tr.truth_iou, tr.ratio);
  std::printf("F1 against the clip's masks: %.2f\n", conf.f1());
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  fs::path data, out;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t val_clips = 0;
  int epochs = 0;
  std::size_t frames_per_epoch = 0;
  bool force = false;
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto* c = app.add_subcommand("bench", "Train, score, and time the four desk configurations");
  c->add_option("--data", a.data, "Dataset directory")->required();
  c->add_option("--seeds", a.seeds, "Comma-separated seeds")->delimiter(',');
  c->add_option("--out", a.out, "Report directory")->required();
  c->add_option("--val-clips", a.val_clips, "Clips held out for scoring (0: a quarter)");
  c->add_option("--epochs", a.epochs, "Override epochs for every config (0: built-in desk plans)");
  c->add_option("--frames-per-epoch", a.frames_per_epoch, "Override frames per epoch (0: built-in desk plans)");
  c->add_flag("--force", a.force, "Overwrite a non-empty report directory");
}

int run_bench(const BenchArgs& a) {
  if (a.seeds.empty()) throw UsageError("bench needs at least one seed");
  BenchLock lock(default_lock_path());
  const auto clips = load_dataset(a.data);
  const Split split = split_clips(clips, a.val_clips ? a.val_clips : default_val_count(clips.size()));
  require_empty_or_force(a.out, a.force);

  Table1Options opt;
  opt.seeds = a.seeds;
  opt.threads = env_threads();
  const int epochs = a.epochs;
  const std::size_t fpe = a.frames_per_epoch;
  opt.plan_for = [epochs, fpe](const NetworkConfig& c, std::uint64_t seed) {
    TrainPlan p = default_bench_plan(c, seed);
    if (epochs > 0) p.epochs = epochs;
    if (fpe > 0) p.frames_per_epoch = fpe;
    return p;
  };
  opt.log = [](const std::string& s) { std::cerr << s << "\n"; };
  const BenchmarkReport rep = run_table1(split.train, split.val, opt);
  const auto checks = directional_checks(rep);

  fs::create_directories(a.out);
  std::string text = report_text(rep) + "\n";
  bool all = true;
  for (const auto& c : checks) {
    text += std::string(c.passed ? "PASS " : "FAIL ") + c.name + ": " + c.detail + "\n";
    all = all && c.passed;
  }
  write_text(a.out / "report.txt", text);
  write_text(a.out / "report.csv", report_csv(rep));
  RunManifest m;
  m.command = "bench";
  m.seed = a.seeds.front();
  nlohmann::json plans = nlohmann::json::object();
  for (const auto& key : opt.configs) plans[key] = opt.plan_for(presets::get(key), a.seeds.front());
  m.config = {{"seeds", a.seeds},      {"plans", plans},       {"adam", adam_json(opt.adam)},
              {"loss", loss_json(opt.loss)}, {"threads", opt.threads},
              {"fps", {{"repetitions", opt.fps.repetitions}, {"warmup", opt.fps.warmup},
                       {"frames_per_rep", opt.fps.frames_per_rep}}}};
  m.artifacts = {"report.txt", "report.csv"};
  m.write(a.out);
  std::cout << text;
  return all ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Real-time wildfire segmentation on synthetic IR video"};
  app.set_version_flag("--version", FIRELINE_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthArgs synth;
  TrainArgs train_args;
  InferArgs infer;
  BenchArgs bench;
  add_synth(app, synth);
  add_train(app, train_args);
  add_infer(app, infer);
  add_bench(app, bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") return run_synth(synth);
    if (cmd == "train") return run_train(train_args);
    if (cmd == "infer") return run_infer(infer);
    return run_bench(bench);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
