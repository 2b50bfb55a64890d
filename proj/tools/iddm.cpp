// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

// iddm: synth | train-denoiser | train-htnet | dehaze | eval | verify

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iddm/asm_physics.hpp"
#include "iddm/checkpoint.hpp"
#include "iddm/imaging_io.hpp"
#include "iddm/metrics.hpp"
#include "iddm/sampler.hpp"
#include "iddm/training.hpp"
#include "iddm/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iddm;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

std::mutex g_log_mutex;

void log_line(const std::string& line) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << line << "\n";
}

void echo_config(const std::string& command, const json& config) {
  std::cerr << "effective config: " << json{{"command", command}, {"config", config}}.dump() << "\n";
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("IDDM_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, std::string("IDDM_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

Range parse_range(const std::string& text) {
  const auto colon = text.find(':');
  IDDM_CHECK(colon != std::string::npos, ErrorCode::kInvalidArgument, "expected lo:hi, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "expected lo:hi, got '" + text + "'");
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  IDDM_CHECK(in.good(), ErrorCode::kFileNotFound, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptStream, path.string() + ": " + e.what());
  }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first error.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const int count = std::max(1, std::min(threads, n));
  std::vector<std::thread> pool;
  for (int k = 1; k < count; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  int procedural = 0;
  std::string manifest;
  std::uint64_t seed = 0;
  std::string airlight = "0.7:1.0";
  std::string sigma = "0.4:1.5";
  double depth_scale = 3.0;
  int size = 64;
  std::string out;
};

int run_synth(const SynthArgs& a, int threads) {
  const Range airlight = parse_range(a.airlight);
  const Range sigma = parse_range(a.sigma);
  IDDM_CHECK(airlight.lo <= airlight.hi && sigma.lo <= sigma.hi, ErrorCode::kInvalidArgument, "empty range");
  IDDM_CHECK(a.depth_scale > 0.0, ErrorCode::kInvalidArgument, "--depth-scale must be positive");
  echo_config("synth", {{"procedural", a.procedural}, {"manifest", a.manifest}, {"seed", a.seed},
                        {"airlight", {airlight.lo, airlight.hi}}, {"sigma", {sigma.lo, sigma.hi}},
                        {"depth_scale", a.depth_scale}, {"size", a.size}, {"out", a.out}});

  std::vector<ManifestEntry> entries;
  if (!a.manifest.empty()) entries = read_manifest(a.manifest);
  const int count = a.manifest.empty() ? a.procedural : static_cast<int>(entries.size());
  IDDM_CHECK(count >= 1, ErrorCode::kEmptySource, "nothing to synthesize");
  fs::create_directories(a.out);

  parallel_for(count, threads, [&](int i) {
    char id[32];
    std::snprintf(id, sizeof(id), "%04d", i);
    const fs::path base = fs::path(a.out) / id;
    ImageTensor clear;
    DepthMap depth;
    if (a.manifest.empty()) {
      std::tie(clear, depth) = generate_scene(a.seed * 1000003ull + std::uint64_t(i), a.size, a.size);
    } else {
      clear = load_image(entries[std::size_t(i)].clear);
      depth = load_depth(entries[std::size_t(i)].depth).depth;
    }
    save_image(clear, base.string() + "_clear.png");
    save_depth_png16(depth, base.string() + "_depth.png");
    // Synthesize from the stored (quantized) clear image and depth so that the
    // files on disk reproduce the hazy image.
    clear = load_image(base.string() + "_clear.png");
    LoadedDepth stored = load_depth(base.string() + "_depth.png", static_cast<float>(a.depth_scale));

    std::mt19937_64 rng(a.seed ^ (0x5eedull + std::uint64_t(i) * 7919ull));
    const double A = std::uniform_real_distribution<double>(airlight.lo, airlight.hi)(rng);
    const double s = std::uniform_real_distribution<double>(sigma.lo, sigma.hi)(rng);
    const HazeParams p = HazeParams::uniform(A, s);
    const HazeDecomposition<float> d = synthesize_hazy(clear, stored.depth, p);
    save_image(d.hazy, base.string() + "_hazy.png");
    save_image(d.haze_total, base.string() + "_haze.png");
    write_json({{"airlight", A}, {"sigma", s}, {"depth_scale", a.depth_scale},
                {"constant_depth", stored.constant_input}},
               base.string() + "_params.json");
  });

  std::ofstream manifest(fs::path(a.out) / "manifest.jsonl");
  IDDM_CHECK(manifest.good(), ErrorCode::kUnwritable, a.out + "/manifest.jsonl");
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "%04d", i);
    manifest << json{{"clear", std::string(id) + "_clear.png"}, {"depth", std::string(id) + "_depth.png"}}.dump()
             << "\n";
  }
  log_line("wrote " + std::to_string(count) + " pairs to " + a.out);
  return 0;
}

// ---------------------------------------------------------------- training

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::string resume;
  std::string denoiser;  // stage 2 only
  std::optional<int> iters, steps, batch, patch, checkpoint_every, procedural, scene_size, base_width, levels;
  std::optional<double> lr, depth_scale;
  std::optional<int> warmup;
  bool cosine = false, no_cosine = false;
  std::optional<std::string> airlight, sigma, htnet_inputs;
  std::optional<std::uint64_t> seed;
  bool full_scale = false;
  int log_every = 50;
};

TrainConfig resolve_config(const TrainArgs& a, bool stage2) {
  TrainConfig cfg = a.full_scale ? TrainConfig::full_scale() : TrainConfig{};
  cfg.seed = default_seed();
  if (!a.config.empty()) cfg = TrainConfig::from_json(read_json(a.config), cfg);
  if (a.iters) (stage2 ? cfg.iters_stage2 : cfg.iters_stage1) = *a.iters;
  if (a.steps) cfg.steps = *a.steps;
  if (a.batch) cfg.batch = *a.batch;
  if (a.patch) cfg.patch = *a.patch;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.procedural) cfg.procedural_scenes = *a.procedural;
  if (a.scene_size) cfg.scene_size = *a.scene_size;
  if (a.base_width) cfg.base_width = *a.base_width;
  if (a.levels) cfg.levels = *a.levels;
  if (a.lr) cfg.lr = *a.lr;
  if (a.warmup) cfg.warmup = *a.warmup;
  if (a.cosine) cfg.cosine_decay = true;
  if (a.no_cosine) cfg.cosine_decay = false;
  if (a.depth_scale) cfg.depth_scale = *a.depth_scale;
  if (a.airlight) cfg.airlight_range = parse_range(*a.airlight);
  if (a.sigma) cfg.sigma_range = parse_range(*a.sigma);
  if (a.htnet_inputs) cfg.htnet_inputs = htnet_inputs_from_string(*a.htnet_inputs);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.manifest.empty()) cfg.scene_size = std::max(cfg.scene_size, cfg.patch);
  cfg.validate();
  return cfg;
}

SceneSource load_source(const TrainArgs& a, const TrainConfig& cfg) {
  if (!a.manifest.empty()) return SceneSource::from_manifest(a.manifest);
  return SceneSource::procedural(cfg.procedural_scenes, cfg.scene_size, cfg.seed);
}

int run_train(const TrainArgs& a, bool stage2) {
  const TrainConfig cfg = resolve_config(a, stage2);
  const char* stage = stage2 ? "stage2" : "stage1";
  json echoed = cfg.to_json();
  echoed["manifest"] = a.manifest;
  echoed["out"] = a.out;
  echoed["resume"] = a.resume;
  if (stage2) echoed["denoiser"] = a.denoiser;
  echo_config(stage2 ? "train-htnet" : "train-denoiser", echoed);

  const SceneSource source = load_source(a, cfg);
  fs::create_directories(a.out);
  write_json(cfg.to_json(), fs::path(a.out) / (std::string(stage) + "_config.json"));

  TrainOptions opts;
  opts.checkpoint_dir = a.out;
  if (!a.resume.empty()) opts.resume = a.resume;
  const auto start = std::chrono::steady_clock::now();
  opts.on_iteration = [&](int it, double loss) {
    if (a.log_every > 0 && it % a.log_every == 0) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s iter %d loss %.6f (%.1fs)", stage, it, loss, seconds_since(start));
      log_line(buf);
    }
  };

  TrainResult r;
  if (stage2) {
    IDDM_CHECK(!a.denoiser.empty(), ErrorCode::kInvalidArgument, "--denoiser is required");
    const Checkpoint frozen = load_checkpoint(a.denoiser, cfg.denoiser_arch());
    r = train_stage2(cfg, frozen.params, source, opts);
  } else {
    r = train_stage1(cfg, source, opts);
  }
  const int last = stage2 ? cfg.iters_stage2 : cfg.iters_stage1;
  save_checkpoint(r.params, fs::path(a.out) / (stage2 ? "htnet.iddm" : "denoiser.iddm"),
                  {{"stage", stage}, {"iteration", last}, {"config", cfg.to_json()}});
  write_loss_csv(r.losses, fs::path(a.out) / (std::string("loss_") + stage + ".csv"), r.first_iteration);
  log_line(std::string(stage) + " finished in " + std::to_string(seconds_since(start)) + " s");
  return 0;
}

// ---------------------------------------------------------------- dehaze

struct DehazeArgs {
  std::string input;
  std::string denoiser;
  std::string htnet;
  int steps = 10;
  std::optional<int> total_steps;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool trace = false;
  double blur_sigma = 3.0;
  double floor = 0.1;
  bool per_channel = false;
};

int run_dehaze(const DehazeArgs& a, int threads) {
  const Checkpoint den = load_checkpoint(a.denoiser);
  const Checkpoint est = load_checkpoint(a.htnet);
  IDDM_CHECK(den.params.arch.kind == NetKind::kDenoiser, ErrorCode::kArchitectureMismatch,
             a.denoiser + " is not a denoiser checkpoint");
  IDDM_CHECK(est.params.arch.kind == NetKind::kHazeEstimator, ErrorCode::kArchitectureMismatch,
             a.htnet + " is not a haze-estimator checkpoint");

  TrainConfig train = den.metadata.contains("config") ? TrainConfig::from_json(den.metadata["config"]) : TrainConfig{};
  if (a.total_steps) train.steps = *a.total_steps;
  const Schedule sched = train.schedule();
  SamplerConfig cfg;
  cfg.subsequence = subsequence(sched.steps, a.steps);
  cfg.blur_sigma = a.blur_sigma;
  cfg.denominator_floor = a.floor;
  cfg.per_channel_normalization = a.per_channel;
  const std::uint64_t seed = a.seed.value_or(default_seed());

  json config = {{"input", a.input}, {"denoiser", a.denoiser}, {"htnet", a.htnet}, {"T", sched.steps},
                 {"beta_start", sched.beta[1]}, {"beta_end", sched.beta[std::size_t(sched.steps)]},
                 {"steps", a.steps}, {"seed", seed}, {"sampler", cfg.to_json()}, {"trace", a.trace},
                 {"out", a.out}};
  echo_config("dehaze", config);

  std::vector<fs::path> inputs;
  if (fs::is_directory(a.input)) {
    inputs = list_pngs(a.input);
  } else {
    IDDM_CHECK(fs::exists(a.input), ErrorCode::kFileNotFound, a.input);
    inputs.push_back(a.input);
  }
  IDDM_CHECK(!inputs.empty(), ErrorCode::kEmptySource, "no PNG inputs in " + a.input);
  fs::create_directories(a.out);

  parallel_for(static_cast<int>(inputs.size()), threads, [&](int i) {
    const fs::path& path = inputs[std::size_t(i)];
    const auto start = std::chrono::steady_clock::now();
    ImageTensor hazy = load_image(path);
    IDDM_CHECK(hazy.channels == 3, ErrorCode::kUnsupportedFormat, path.string() + ": expected an RGB image");
    const SampleTrace<float> tr = sample(hazy, den.params, est.params, sched, cfg, seed);
    const ImageTensor h_stab = stabilize_haze(tr.h_total, cfg);
    const ImageTensor restored = restore(tr.x0, h_stab, cfg);
    const std::string stem = path.stem().string();
    const fs::path base = fs::path(a.out) / stem;
    save_image(restored, base.string() + "_restored.png");
    save_image(h_stab, base.string() + "_haze.png");
    if (a.trace) export_trace(tr, base.string() + "_trace");
    json report = config;
    report["input"] = path.string();
    report["runtime_seconds"] = seconds_since(start);
    write_json(report, base.string() + ".json");
    log_line(path.filename().string() + " -> " + base.string() + "_restored.png");
  });
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string restored;
  std::string reference;
  std::string out;
};

int run_eval(const EvalArgs& a, int threads) {
  echo_config("eval", {{"restored", a.restored}, {"reference", a.reference}, {"out", a.out}});
  IDDM_CHECK(fs::is_directory(a.restored), ErrorCode::kFileNotFound, a.restored);
  IDDM_CHECK(fs::is_directory(a.reference), ErrorCode::kFileNotFound, a.reference);
  struct Pair {
    std::string id;
    fs::path restored, reference;
  };
  std::vector<Pair> pairs;
  for (const auto& ref : list_pngs(a.reference)) {
    const std::string stem = ref.stem().string();
    for (const std::string& name : {stem + ".png", stem + "_restored.png"}) {
      const fs::path cand = fs::path(a.restored) / name;
      if (fs::exists(cand)) {
        pairs.push_back({stem, cand, ref});
        break;
      }
    }
  }
  IDDM_CHECK(!pairs.empty(), ErrorCode::kEmptySource, "no matching image pairs");

  std::vector<ImageScore> scores(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), threads, [&](int i) {
    const Pair& p = pairs[std::size_t(i)];
    const ImageTensor r = load_image(p.restored);
    const ImageTensor ref = load_image(p.reference);
    scores[std::size_t(i)] = {p.id, psnr(r, ref), ssim(r, ref)};
  });
  MetricReport report;
  for (auto& s : scores) report.add(std::move(s));

  fs::create_directories(a.out);
  report.write_csv(fs::path(a.out) / "metrics.csv");
  write_json(report.aggregate_json(), fs::path(a.out) / "metrics.json");
  std::cout << report.aggregate_json().dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  std::string suite = "all";
  std::string schedule;
  std::optional<std::uint64_t> seed;
};

int run_verify_command(const VerifyArgs& a) {
  VerifyOptions opts;
  opts.seed = a.seed.value_or(default_seed());
  if (!a.schedule.empty()) opts.schedule = schedule_from_json(read_json(a.schedule));
  echo_config("verify", {{"suite", a.suite}, {"schedule", a.schedule}, {"seed", opts.seed}});
  const auto results = run_verify(a.suite, opts);
  int failed = 0;
  for (const auto& r : results) {
    std::cout << format_check(r) << "\n";
    failed += !r.passed;
  }
  std::cout << results.size() - std::size_t(failed) << "/" << results.size() << " checks passed\n";
  return failed == 0 ? 0 : kExitCheckFailed;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFileNotFound:
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kCorruptStream:
    case ErrorCode::kUnwritable:
    case ErrorCode::kEmptySource:
      return kExitIo;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kOutOfRange:
      return kExitUsage;
    default:
      return kExitCheckFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image dehazing diffusion model: data synthesis, training, sampling and verification"};
  app.require_subcommand(1);
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--threads", threads, "Worker threads for per-image work (default: logical cores)")
      ->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write clear/depth/hazy/haze PNGs plus parameters per pair");
  auto* proc = synth_cmd->add_option("--procedural", synth.procedural, "Number of procedural scenes");
  auto* man = synth_cmd->add_option("--manifest", synth.manifest, "JSON-lines manifest of clear/depth pairs");
  proc->excludes(man);
  synth_cmd->add_option("--seed", synth.seed, "Random seed (default: IDDM_SEED or 0)");
  synth_cmd->add_option("--airlight", synth.airlight, "Airlight range lo:hi")->capture_default_str();
  synth_cmd->add_option("--sigma", synth.sigma, "Scattering range lo:hi")->capture_default_str();
  synth_cmd->add_option("--depth-scale", synth.depth_scale, "Multiplier on normalized depth")->capture_default_str();
  synth_cmd->add_option("--size", synth.size, "Procedural scene size in pixels")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs train1, train2;
  auto add_train_options = [](CLI::App* cmd, TrainArgs& t) {
    cmd->add_option("--config", t.config, "JSON training config; flags override its fields");
    cmd->add_option("--manifest", t.manifest, "JSON-lines manifest of clear/depth pairs (default: procedural scenes)");
    cmd->add_option("--out", t.out, "Output directory for checkpoints and loss curves")->required();
    cmd->add_option("--resume", t.resume, "Checkpoint to resume from");
    cmd->add_option("--iters", t.iters, "Training iterations");
    cmd->add_option("--T", t.steps, "Diffusion steps");
    cmd->add_option("--batch", t.batch, "Batch size");
    cmd->add_option("--patch", t.patch, "Training crop size");
    cmd->add_option("--lr", t.lr, "Adam learning rate");
    cmd->add_option("--warmup", t.warmup, "Linear learning-rate warmup iterations");
    auto* cos = cmd->add_flag("--cosine", t.cosine, "Cosine-anneal the learning rate to zero over the stage");
    cmd->add_flag("--no-cosine", t.no_cosine, "Keep the learning rate constant after warmup")->excludes(cos);
    cmd->add_option("--depth-scale", t.depth_scale, "Multiplier on normalized depth");
    cmd->add_option("--airlight", t.airlight, "Airlight range lo:hi");
    cmd->add_option("--sigma", t.sigma, "Scattering range lo:hi");
    cmd->add_option("--procedural", t.procedural, "Number of procedural scenes");
    cmd->add_option("--scene-size", t.scene_size, "Procedural scene size");
    cmd->add_option("--base-width", t.base_width, "U-Net base channel width");
    cmd->add_option("--levels", t.levels, "U-Net resolution levels");
    cmd->add_option("--htnet-inputs", t.htnet_inputs, "HtNet inputs: hazy | state | state_and_hazy");
    cmd->add_option("--checkpoint-every", t.checkpoint_every, "Checkpoint period in iterations (0: final only)");
    cmd->add_option("--seed", t.seed, "Random seed (default: IDDM_SEED or 0)");
    cmd->add_option("--log-every", t.log_every, "Progress log period")->capture_default_str();
    cmd->add_flag("--full-scale", t.full_scale, "Start from the full-scale settings instead of desk-scale ones");
  };
  auto* train1_cmd = app.add_subcommand("train-denoiser", "Stage 1: train the noise predictor");
  add_train_options(train1_cmd, train1);
  auto* train2_cmd = app.add_subcommand("train-htnet", "Stage 2: train the haze estimator against a frozen denoiser");
  add_train_options(train2_cmd, train2);
  train2_cmd->add_option("--denoiser", train2.denoiser, "Stage-1 checkpoint")->required();

  DehazeArgs dehaze;
  auto* dehaze_cmd = app.add_subcommand("dehaze", "Restore hazy images with trained networks");
  dehaze_cmd->add_option("--input", dehaze.input, "Hazy PNG or directory of PNGs")->required();
  dehaze_cmd->add_option("--denoiser", dehaze.denoiser, "Denoiser checkpoint")->required();
  dehaze_cmd->add_option("--htnet", dehaze.htnet, "Haze-estimator checkpoint")->required();
  dehaze_cmd->add_option("--steps", dehaze.steps, "Sampling steps S")->capture_default_str();
  dehaze_cmd->add_option("--T", dehaze.total_steps, "Diffusion steps (default: from the denoiser checkpoint)");
  dehaze_cmd->add_option("--out", dehaze.out, "Output directory")->required();
  dehaze_cmd->add_option("--seed", dehaze.seed, "Sampling seed (default: IDDM_SEED or 0)");
  dehaze_cmd->add_option("--blur-sigma", dehaze.blur_sigma, "Haze stabilization blur")->capture_default_str();
  dehaze_cmd->add_option("--floor", dehaze.floor, "Restoration denominator floor")->capture_default_str();
  dehaze_cmd->add_flag("--per-channel", dehaze.per_channel, "Normalize the haze map per channel");
  dehaze_cmd->add_flag("--trace", dehaze.trace, "Export per-step states and a summary");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over paired directories (matched by file stem)");
  eval_cmd->add_option("--restored", eval.restored, "Directory of restored images")->required();
  eval_cmd->add_option("--reference", eval.reference, "Directory of reference images")->required();
  eval_cmd->add_option("--out", eval.out, "Output directory for metrics.csv/metrics.json")->required();

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Run the built-in oracle and invariant checks");
  verify_cmd->add_option("--suite", verify.suite, "physics | schedule | forward | sampler | gradients | all")
      ->check(CLI::IsMember({"physics", "schedule", "forward", "sampler", "gradients", "all"}))
      ->capture_default_str();
  verify_cmd->add_option("--schedule", verify.schedule, "JSON schedule under test ({\"betas\": [...]} or {\"alpha_bar\": [...]})");
  verify_cmd->add_option("--seed", verify.seed, "Seed for random draws (default: IDDM_SEED or 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth_cmd) {
      if (!synth_cmd->count("--seed")) synth.seed = default_seed();
      IDDM_CHECK(synth.procedural > 0 || !synth.manifest.empty(), ErrorCode::kInvalidArgument,
                 "synth needs --procedural N or --manifest");
      return run_synth(synth, threads);
    }
    if (*train1_cmd) return run_train(train1, false);
    if (*train2_cmd) return run_train(train2, true);
    if (*dehaze_cmd) return run_dehaze(dehaze, threads);
    if (*eval_cmd) return run_eval(eval, threads);
    if (*verify_cmd) return run_verify_command(verify);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
