// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "iddm/checkpoint.hpp"
#include "iddm/forward_process.hpp"

namespace iddm {
namespace fs = std::filesystem;

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.steps = 1000;
  c.lr = 1e-5;
  c.cosine_decay = false;
  c.warmup = 0;
  c.batch = 16;
  c.iters_stage1 = 500000;
  c.iters_stage2 = 60000;
  c.patch = 256;
  c.scene_size = 256;
  c.depth_scale = 1.0;
  return c;
}

double TrainConfig::lr_at(int iteration, int total) const {
  double rate = lr;
  if (warmup > 0 && iteration <= warmup) rate *= double(iteration) / warmup;
  if (cosine_decay && total > warmup) {
    const double progress = std::clamp(double(iteration - 1 - warmup) / (total - warmup), 0.0, 1.0);
    rate *= 0.5 * (1.0 + std::cos(M_PI * progress));
  }
  return rate;
}

Schedule TrainConfig::schedule() const {
  const auto [lo, hi] = scaled_beta_range(steps);
  return make_schedule(steps, beta_start.value_or(lo), beta_end.value_or(hi));
}

Architecture TrainConfig::denoiser_arch() const {
  Architecture a = denoiser_architecture(base_width, levels);
  a.time_dim = time_dim;
  return a;
}

Architecture TrainConfig::htnet_arch() const {
  Architecture a = htnet_architecture(htnet_inputs, base_width, levels);
  a.time_dim = time_dim;
  return a;
}

void TrainConfig::validate() const {
  auto in_range = [](Range r, double lo, double hi) { return r.lo <= r.hi && r.lo > lo && r.hi <= hi; };
  IDDM_CHECK(steps >= 1, ErrorCode::kInvalidArgument, "T must be >= 1");
  IDDM_CHECK(in_range(airlight_range, 0.0, 2.0), ErrorCode::kInvalidArgument, "airlight range must lie in (0, 2]");
  IDDM_CHECK(in_range(sigma_range, 0.0, 1e9), ErrorCode::kInvalidArgument, "sigma range must be positive");
  IDDM_CHECK(depth_scale > 0.0, ErrorCode::kInvalidArgument, "depth_scale must be positive");
  IDDM_CHECK(batch >= 1 && patch >= 8, ErrorCode::kInvalidArgument, "batch >= 1 and patch >= 8 required");
  IDDM_CHECK(iters_stage1 >= 0 && iters_stage2 >= 0, ErrorCode::kInvalidArgument, "iteration counts must be >= 0");
  IDDM_CHECK(lr > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorCode::kInvalidArgument,
             "bad optimizer settings");
  IDDM_CHECK(warmup >= 0, ErrorCode::kInvalidArgument, "warmup must be >= 0");
  IDDM_CHECK(scene_size >= patch, ErrorCode::kInvalidArgument, "patch must not exceed the scene size");
  denoiser_arch().validate();
}

nlohmann::json TrainConfig::to_json() const {
  const Schedule s = schedule();
  return {{"T", steps},
          {"beta_start", s.beta[1]},
          {"beta_end", s.beta[static_cast<std::size_t>(steps)]},
          {"airlight_range", {airlight_range.lo, airlight_range.hi}},
          {"sigma_range", {sigma_range.lo, sigma_range.hi}},
          {"depth_scale", depth_scale},
          {"lr", lr},
          {"cosine_decay", cosine_decay},
          {"warmup", warmup},
          {"beta1", beta1},
          {"beta2", beta2},
          {"batch", batch},
          {"iters_stage1", iters_stage1},
          {"iters_stage2", iters_stage2},
          {"patch", patch},
          {"flips", flips},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"procedural_scenes", procedural_scenes},
          {"scene_size", scene_size},
          {"base_width", base_width},
          {"levels", levels},
          {"time_dim", time_dim},
          {"htnet_inputs", to_string(htnet_inputs)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  static const char* const kKnown[] = {"T", "beta_start", "beta_end", "airlight_range", "sigma_range", "depth_scale",
                                       "lr", "cosine_decay", "warmup", "beta1", "beta2", "batch", "iters_stage1", "iters_stage2", "patch",
                                       "flips", "seed", "checkpoint_every", "procedural_scenes", "scene_size",
                                       "base_width", "levels", "time_dim", "htnet_inputs"};
  IDDM_CHECK(j.is_object(), ErrorCode::kInvalidArgument, "training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    IDDM_CHECK(known, ErrorCode::kInvalidArgument, "unknown config field '" + key + "'");
  }
  auto range = [&](const char* key, Range& r) {
    if (j.contains(key)) r = {j[key].at(0).get<double>(), j[key].at(1).get<double>()};
  };
  if (j.contains("T")) c.steps = j["T"].get<int>();
  if (j.contains("beta_start")) c.beta_start = j["beta_start"].get<double>();
  if (j.contains("beta_end")) c.beta_end = j["beta_end"].get<double>();
  range("airlight_range", c.airlight_range);
  range("sigma_range", c.sigma_range);
  c.depth_scale = j.value("depth_scale", c.depth_scale);
  c.lr = j.value("lr", c.lr);
  c.cosine_decay = j.value("cosine_decay", c.cosine_decay);
  c.warmup = j.value("warmup", c.warmup);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.batch = j.value("batch", c.batch);
  c.iters_stage1 = j.value("iters_stage1", c.iters_stage1);
  c.iters_stage2 = j.value("iters_stage2", c.iters_stage2);
  c.patch = j.value("patch", c.patch);
  c.flips = j.value("flips", c.flips);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.procedural_scenes = j.value("procedural_scenes", c.procedural_scenes);
  c.scene_size = j.value("scene_size", c.scene_size);
  c.base_width = j.value("base_width", c.base_width);
  c.levels = j.value("levels", c.levels);
  c.time_dim = j.value("time_dim", c.time_dim);
  if (j.contains("htnet_inputs")) c.htnet_inputs = htnet_inputs_from_string(j["htnet_inputs"].get<std::string>());
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

SceneSource SceneSource::procedural(int count, int size, std::uint64_t seed) {
  IDDM_CHECK(count >= 1, ErrorCode::kEmptySource, "procedural source needs at least one scene");
  SceneSource src;
  for (int i = 0; i < count; ++i) src.scenes.push_back(generate_scene(seed * 1000003ull + std::uint64_t(i), size, size));
  return src;
}

SceneSource SceneSource::from_manifest(const fs::path& manifest) {
  SceneSource src;
  for (const auto& e : read_manifest(manifest)) {
    ImageTensor img = load_image(e.clear);
    IDDM_CHECK(img.channels == 3, ErrorCode::kUnsupportedFormat, e.clear.string() + ": clear image must be RGB");
    LoadedDepth d = load_depth(e.depth, 1.0f);
    IDDM_CHECK(d.depth.height == img.height && d.depth.width == img.width, ErrorCode::kShapeMismatch,
               e.depth.string() + ": depth size differs from its image");
    src.scenes.emplace_back(std::move(img), std::move(d.depth));
  }
  IDDM_CHECK(!src.empty(), ErrorCode::kEmptySource, manifest.string() + " lists no pairs");
  return src;
}

namespace {

std::pair<ImageTensor, DepthMap> crop_and_flip(const ImageTensor& img, const DepthMap& depth, int patch, bool flips,
                                               TrainRng& rng) {
  IDDM_CHECK(img.height >= patch && img.width >= patch, ErrorCode::kInvalidArgument, "scene smaller than patch");
  std::uniform_int_distribution<int> oy(0, img.height - patch);
  std::uniform_int_distribution<int> ox(0, img.width - patch);
  std::bernoulli_distribution coin(0.5);
  const int y0 = oy(rng);
  const int x0 = ox(rng);
  const bool flip_h = flips && coin(rng);
  const bool flip_v = flips && coin(rng);
  ImageTensor out(patch, patch, img.channels);
  DepthMap dout(patch, patch);
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const int sy = y0 + (flip_v ? patch - 1 - y : y);
      const int sx = x0 + (flip_h ? patch - 1 - x : x);
      for (int c = 0; c < img.channels; ++c) out(y, x, c) = img(sy, sx, c);
      dout(y, x) = depth(sy, sx);
    }
  return {std::move(out), std::move(dout)};
}

void check_finite_loss(double loss, const char* stage) {
  IDDM_CHECK(std::isfinite(loss), ErrorCode::kNumerical, std::string(stage) + " loss is not finite");
}

}  // namespace

TrainBatch sample_batch(const SceneSource& source, const TrainConfig& cfg, TrainRng& rng) {
  IDDM_CHECK(!source.empty(), ErrorCode::kEmptySource, "no scenes to sample from");
  std::uniform_int_distribution<std::size_t> pick(0, source.scenes.size() - 1);
  std::uniform_real_distribution<double> airlight(cfg.airlight_range.lo, cfg.airlight_range.hi);
  std::uniform_real_distribution<double> scattering(cfg.sigma_range.lo, cfg.sigma_range.hi);
  std::uniform_int_distribution<int> step(1, cfg.steps);

  TrainBatch b;
  for (int i = 0; i < cfg.batch; ++i) {
    const auto& [img, depth] = source.scenes[pick(rng)];
    auto [clear, z] = crop_and_flip(img, depth, cfg.patch, cfg.flips, rng);
    z.data *= static_cast<float>(cfg.depth_scale);
    const double a = airlight(rng);
    const HazeParams p = HazeParams::uniform(a, scattering(rng));
    const int t = step(rng);
    HazeDecomposition<float> d = synthesize_hazy(clear, z, p);
    b.h_t.push_back(haze_at_step(z, p, t, cfg.steps));
    b.noise.push_back(standard_normal<float>(cfg.patch, cfg.patch, 3, rng));
    b.clear.push_back(std::move(clear));
    b.x0.push_back(std::move(d.attenuated));
    b.hazy.push_back(std::move(d.hazy));
    b.h_total.push_back(std::move(d.haze_total));
    b.t.push_back(t);
    b.params.push_back(p);
  }
  return b;
}

std::vector<ImageTensor> diffuse_batch(const TrainBatch& batch, const Schedule& s) {
  std::vector<ImageTensor> x_t;
  for (std::size_t i = 0; i < batch.size(); ++i)
    x_t.push_back(diffuse_closed(batch.x0[i], batch.h_t[i], batch.t[i], batch.noise[i], s).x_t);
  return x_t;
}

LossAndGrad mse_loss(const std::vector<ImageTensor>& pred, const std::vector<ImageTensor>& target) {
  IDDM_CHECK(pred.size() == target.size() && !pred.empty(), ErrorCode::kShapeMismatch, "mse_loss batch mismatch");
  double n = 0.0;
  for (const auto& p : pred) n += static_cast<double>(p.size());
  LossAndGrad out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require_same_shape(pred[i], target[i], "mse_loss");
    const Eigen::ArrayXf diff = pred[i].data - target[i].data;
    out.loss += diff.cast<double>().square().sum();
    ImageTensor g = pred[i];
    g.data = diff * static_cast<float>(2.0 / n);
    out.grad.push_back(std::move(g));
  }
  out.loss /= n;
  return out;
}

LossAndGrad l1_loss(const std::vector<ImageTensor>& pred, const std::vector<ImageTensor>& target) {
  IDDM_CHECK(pred.size() == target.size() && !pred.empty(), ErrorCode::kShapeMismatch, "l1_loss batch mismatch");
  double n = 0.0;
  for (const auto& p : pred) n += static_cast<double>(p.size());
  LossAndGrad out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require_same_shape(pred[i], target[i], "l1_loss");
    const Eigen::ArrayXf diff = pred[i].data - target[i].data;
    out.loss += diff.cast<double>().abs().sum();
    ImageTensor g = pred[i];
    g.data = diff.sign() * static_cast<float>(1.0 / n);
    out.grad.push_back(std::move(g));
  }
  out.loss /= n;
  return out;
}

double stage1_step(ModelParams<float>& denoiser, const TrainBatch& batch, const Schedule& s, const TrainConfig& cfg,
                   double lr) {
  const std::vector<ImageTensor> x_t = diffuse_batch(batch, s);
  const auto pred = denoiser_forward<float>(denoiser, x_t, batch.h_t, batch.hazy, batch.t, {.record = true});
  LossAndGrad l = mse_loss(pred, batch.noise);
  check_finite_loss(l.loss, "stage-1");
  backward<float>(denoiser, l.grad);
  adam_update(denoiser, lr, cfg.beta1, cfg.beta2, denoiser.adam_steps + 1);
  return l.loss;
}

Stage2Objective stage2_objective(const ModelParams<float>& frozen, const TrainBatch& batch,
                                 const std::vector<ImageTensor>& x_t, const std::vector<ImageTensor>& h_est) {
  Stage2Objective obj;
  // Reference branch: ground-truth haze, no gradients.
  ModelParams<float> reference;
  reference.arch = frozen.arch;
  reference.values = frozen.values;
  const auto eps_true = denoiser_forward<float>(reference, x_t, batch.h_t, batch.hazy, batch.t);
  // Estimated-haze branch: gradients w.r.t. the h input only.
  const auto eps_est = denoiser_forward<float>(reference, x_t, h_est, batch.hazy, batch.t,
                                               {.record = true, .param_grads = false, .input_grads = true});

  LossAndGrad haze = l1_loss(h_est, batch.h_t);
  LossAndGrad consistency = l1_loss(eps_est, eps_true);
  const InputGradients<float> through = backward<float>(reference, consistency.grad);
  obj.haze_term = haze.loss;
  obj.consistency_term = consistency.loss;
  obj.grad_h_est = std::move(haze.grad);
  const auto& via_denoiser = through.per_input.at(1);  // inputs are (x_t, h_t, hazy)
  for (std::size_t i = 0; i < obj.grad_h_est.size(); ++i) obj.grad_h_est[i].data += via_denoiser[i].data;
  return obj;
}

double stage2_step(ModelParams<float>& htnet, const ModelParams<float>& frozen_denoiser, const TrainBatch& batch,
                   const Schedule& s, const TrainConfig& cfg, double lr) {
  const std::vector<ImageTensor> x_t = diffuse_batch(batch, s);
  const auto h_est = htnet_forward<float>(htnet, x_t, batch.hazy, batch.t, {.record = true});
  Stage2Objective obj = stage2_objective(frozen_denoiser, batch, x_t, h_est);
  check_finite_loss(obj.loss(), "stage-2");
  backward<float>(htnet, obj.grad_h_est);
  adam_update(htnet, lr, cfg.beta1, cfg.beta2, htnet.adam_steps + 1);
  return obj.loss();
}

nlohmann::json training_metadata(const TrainConfig& cfg, const std::string& stage, int iteration, const TrainRng& rng) {
  std::ostringstream state;
  state << rng;
  return {{"stage", stage}, {"iteration", iteration}, {"rng_state", state.str()}, {"config", cfg.to_json()}};
}

namespace {

struct LoopState {
  ModelParams<float> params;
  TrainRng rng;
  int start = 1;
};

LoopState begin_loop(const TrainConfig& cfg, const TrainOptions& opts, const Architecture& arch, const char* stage,
                     std::uint64_t salt) {
  cfg.validate();
  LoopState st;
  if (opts.resume) {
    Checkpoint ck = load_checkpoint(*opts.resume, arch);
    IDDM_CHECK(ck.metadata.value("stage", std::string()) == stage, ErrorCode::kArchitectureMismatch,
               opts.resume->string() + " is not a " + stage + " checkpoint");
    st.params = std::move(ck.params);
    st.params.grads_ready = !st.params.adam_m.empty();
    if (st.params.grads_ready)
      for (const auto& [name, v] : st.params.values) st.params.grads[name] = ModelParams<float>::Mat::Zero(v.rows(), v.cols());
    std::istringstream state(ck.metadata.at("rng_state").get<std::string>());
    state >> st.rng;
    st.start = ck.metadata.at("iteration").get<int>() + 1;
  } else {
    st.params = init_params<float>(arch, cfg.seed ^ salt);
    st.rng.seed(cfg.seed * 0x9e3779b97f4a7c15ull + salt);
  }
  return st;
}

void maybe_checkpoint(const TrainConfig& cfg, const TrainOptions& opts, const LoopState& st, const char* stage,
                      int iteration) {
  if (opts.checkpoint_dir.empty()) return;
  const bool periodic = cfg.checkpoint_every > 0 && iteration % cfg.checkpoint_every == 0;
  const int last = std::string(stage) == "stage1" ? cfg.iters_stage1 : cfg.iters_stage2;
  if (!periodic && iteration != last) return;
  fs::create_directories(opts.checkpoint_dir);
  const nlohmann::json meta = training_metadata(cfg, stage, iteration, st.rng);
  save_checkpoint(st.params, opts.checkpoint_dir / (std::string(stage) + "_" + std::to_string(iteration) + ".iddm"), meta);
  save_checkpoint(st.params, opts.checkpoint_dir / (std::string(stage) + "_latest.iddm"), meta);
}

}  // namespace

TrainResult train_stage1(const TrainConfig& cfg, const SceneSource& source, const TrainOptions& opts) {
  LoopState st = begin_loop(cfg, opts, cfg.denoiser_arch(), "stage1", 0x51);
  const Schedule s = cfg.schedule();
  TrainResult r;
  r.first_iteration = st.start;
  for (int it = st.start; it <= cfg.iters_stage1; ++it) {
    const TrainBatch batch = sample_batch(source, cfg, st.rng);
    const double loss = stage1_step(st.params, batch, s, cfg, cfg.lr_at(it, cfg.iters_stage1));
    r.losses.push_back(loss);
    if (opts.on_iteration) opts.on_iteration(it, loss);
    maybe_checkpoint(cfg, opts, st, "stage1", it);
  }
  r.params = std::move(st.params);
  return r;
}

TrainResult train_stage2(const TrainConfig& cfg, const ModelParams<float>& frozen_denoiser, const SceneSource& source,
                         const TrainOptions& opts) {
  IDDM_CHECK(!frozen_denoiser.values.empty(), ErrorCode::kNotInitialized, "stage 2 needs a trained denoiser");
  IDDM_CHECK(frozen_denoiser.arch.kind == NetKind::kDenoiser, ErrorCode::kArchitectureMismatch,
             "stage 2 needs a denoiser checkpoint");
  LoopState st = begin_loop(cfg, opts, cfg.htnet_arch(), "stage2", 0x52);
  const Schedule s = cfg.schedule();
  TrainResult r;
  r.first_iteration = st.start;
  for (int it = st.start; it <= cfg.iters_stage2; ++it) {
    const TrainBatch batch = sample_batch(source, cfg, st.rng);
    const double loss = stage2_step(st.params, frozen_denoiser, batch, s, cfg, cfg.lr_at(it, cfg.iters_stage2));
    r.losses.push_back(loss);
    if (opts.on_iteration) opts.on_iteration(it, loss);
    maybe_checkpoint(cfg, opts, st, "stage2", it);
  }
  r.params = std::move(st.params);
  return r;
}

void write_loss_csv(const std::vector<double>& losses, const fs::path& path, int first_iteration) {
  std::ofstream out(path);
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, path.string());
  out << "iteration,loss\n";
  out.precision(10);
  for (std::size_t i = 0; i < losses.size(); ++i) out << first_iteration + int(i) << "," << losses[i] << "\n";
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
  IDDM_CHECK(window >= 1, ErrorCode::kInvalidArgument, "window must be >= 1");
  std::vector<double> out;
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= static_cast<std::size_t>(window)) acc -= values[i - window];
    out.push_back(acc / static_cast<double>(std::min<std::size_t>(i + 1, window)));
  }
  return out;
}

}  // namespace iddm
