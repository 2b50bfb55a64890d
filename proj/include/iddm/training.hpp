// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Online data synthesis and the two training stages:
//   stage 1: denoiser with MSE on eps, conditioned on ground-truth h_t and x^;
//   stage 2: HtNet with L1(h_t, h~_t) + L1(eps(x_t, h~_t) - eps(x_t, h_t))
//            through a frozen stage-1 denoiser.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "iddm/asm_physics.hpp"
#include "iddm/imaging_io.hpp"
#include "iddm/nets.hpp"
#include "iddm/schedule.hpp"

namespace iddm {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct TrainConfig {
  int steps = 200;  // T
  /// Unset means scaled_beta_range(steps).
  std::optional<double> beta_start;
  std::optional<double> beta_end;
  Range airlight_range{0.7, 1.0};
  Range sigma_range{0.4, 1.5};
  double depth_scale = 3.0;
  double lr = 2e-3;
  bool cosine_decay = true;   // anneal lr to 0 over the stage
  int warmup = 50;            // linear warmup iterations
  double beta1 = 0.9;
  double beta2 = 0.99;
  int batch = 4;
  int iters_stage1 = 2000;
  int iters_stage2 = 500;
  int patch = 32;
  bool flips = true;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  // Procedural source (used when no manifest is given).
  int procedural_scenes = 64;
  int scene_size = 32;
  // Architecture.
  int base_width = 16;
  int levels = 2;
  int time_dim = 32;
  HtnetInputs htnet_inputs = HtnetInputs::kHazy;

  /// The full-scale settings of the original training runs.
  static TrainConfig full_scale();

  /// Learning rate for a 1-based iteration of a stage with `total` iterations.
  double lr_at(int iteration, int total) const;

  Schedule schedule() const;
  Architecture denoiser_arch() const;
  Architecture htnet_arch() const;
  void validate() const;

  nlohmann::json to_json() const;
  /// Fields missing from `j` keep their value in `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Clear/depth pairs; depth normalized to [0,1] (depth_scale is applied per batch).
struct SceneSource {
  std::vector<std::pair<ImageTensor, DepthMap>> scenes;

  static SceneSource procedural(int count, int size, std::uint64_t seed);
  static SceneSource from_manifest(const std::filesystem::path& manifest);
  bool empty() const { return scenes.empty(); }
};

struct TrainBatch {
  std::vector<ImageTensor> clear;
  std::vector<ImageTensor> x0;       // J * T_r
  std::vector<ImageTensor> hazy;     // x0 + h_T
  std::vector<ImageTensor> h_t;
  std::vector<ImageTensor> h_total;  // h_T
  std::vector<ImageTensor> noise;
  std::vector<int> t;
  std::vector<HazeParams> params;

  std::size_t size() const { return t.size(); }
};

using TrainRng = std::mt19937_64;

TrainBatch sample_batch(const SceneSource& source, const TrainConfig& cfg, TrainRng& rng);

/// x_t for every element via the closed-form forward process.
std::vector<ImageTensor> diffuse_batch(const TrainBatch& batch, const Schedule& s);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<ImageTensor> grad;
};

/// Mean squared error over all elements and its gradient w.r.t. `pred`.
LossAndGrad mse_loss(const std::vector<ImageTensor>& pred, const std::vector<ImageTensor>& target);
/// Mean absolute error; subgradient sign(pred - target) / N (0 at ties).
LossAndGrad l1_loss(const std::vector<ImageTensor>& pred, const std::vector<ImageTensor>& target);

/// One stage-1 update (forward, backward, Adam at rate `lr`). Returns the batch loss.
double stage1_step(ModelParams<float>& denoiser, const TrainBatch& batch, const Schedule& s, const TrainConfig& cfg,
                   double lr);

struct Stage2Objective {
  double haze_term = 0.0;         // L1(h_t, h~_t)
  double consistency_term = 0.0;  // L1(eps(h~_t), eps(h_t))
  double loss() const { return haze_term + consistency_term; }
  std::vector<ImageTensor> grad_h_est;  // d loss / d h~_t
};

/// Evaluates the stage-2 loss for a given haze estimate, differentiating through
/// the frozen denoiser's h input. `frozen` is never modified.
Stage2Objective stage2_objective(const ModelParams<float>& frozen, const TrainBatch& batch,
                                 const std::vector<ImageTensor>& x_t, const std::vector<ImageTensor>& h_est);

/// One stage-2 update of `htnet` at rate `lr`. Returns the batch loss.
double stage2_step(ModelParams<float>& htnet, const ModelParams<float>& frozen_denoiser, const TrainBatch& batch,
                   const Schedule& s, const TrainConfig& cfg, double lr);

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty disables checkpoint files
  std::optional<std::filesystem::path> resume;
  std::function<void(int iteration, double loss)> on_iteration;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<double> losses;  // one per iteration run
  int first_iteration = 1;
};

TrainResult train_stage1(const TrainConfig& cfg, const SceneSource& source, const TrainOptions& opts = {});
TrainResult train_stage2(const TrainConfig& cfg, const ModelParams<float>& frozen_denoiser, const SceneSource& source,
                         const TrainOptions& opts = {});

/// Checkpoint metadata written by the trainers: stage, iteration, rng state, config, schedule.
nlohmann::json training_metadata(const TrainConfig& cfg, const std::string& stage, int iteration, const TrainRng& rng);

void write_loss_csv(const std::vector<double>& losses, const std::filesystem::path& path, int first_iteration = 1);

/// Trailing-window moving average.
std::vector<double> smooth(const std::vector<double>& values, int window);

}  // namespace iddm
