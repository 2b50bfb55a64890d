// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Deterministic implicit sampling with per-step haze subtraction, followed by
// haze stabilization and division restoration J = x_0 / (1 - h~_T).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include <json.hpp>

#include "iddm/forward_process.hpp"
#include "iddm/image.hpp"
#include "iddm/nets.hpp"
#include "iddm/schedule.hpp"

namespace iddm {

struct SamplerConfig {
  Subsequence subsequence;
  /// Per-step sigma_t indexed like `subsequence.steps`; empty means all zero.
  std::vector<double> ddim_sigma;
  double denominator_floor = 0.1;
  double blur_sigma = 3.0;
  bool per_channel_normalization = false;
  /// Clamp the per-step estimate of x_0 (haze removed) to [0, 1].
  bool clip_x0 = true;

  double sigma_at(std::size_t i) const { return i < ddim_sigma.size() ? ddim_sigma[i] : 0.0; }
  nlohmann::json to_json() const;
};

template <typename Scalar>
struct StepRecord {
  int t = 0;
  Image<Scalar> x_t;
  Image<Scalar> eps;
  Image<Scalar> h_t;
};

template <typename Scalar>
struct SampleTrace {
  std::vector<StepRecord<Scalar>> steps;  // descending t
  Image<Scalar> x0;
  Image<Scalar> h_total;  // haze estimate at the largest step
};

template <typename Scalar>
using NoisePredictor =
    std::function<Image<Scalar>(const Image<Scalar>& x_t, const Image<Scalar>& h_t, const Image<Scalar>& hazy, int t)>;
template <typename Scalar>
using HazePredictor = std::function<Image<Scalar>(const Image<Scalar>& x_t, const Image<Scalar>& hazy, int t)>;

/// (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
template <typename Scalar>
Image<Scalar> predict_x0(const Image<Scalar>& x_t, const Image<Scalar>& eps, int t, const Schedule& s) {
  require_same_shape(x_t, eps, "predict_x0");
  s.check_step(t, 0);
  IDDM_CHECK(s.alpha_bar_at(t) > 0.0, ErrorCode::kNumerical, "alpha_bar_t is zero");
  const auto root = static_cast<Scalar>(std::sqrt(s.alpha_bar_at(t)));
  const auto c_t = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_bar_at(t)));
  Image<Scalar> out = x_t;
  out.data = (x_t.data - c_t * eps.data) / root;
  return out;
}

/// One implicit update from t_hi down to t_lo (t_lo = 0 gives the final estimate):
///   sqrt(abar_lo) (x0_hat - (h_hi - h_lo)) + sqrt(1 - abar_lo - sigma^2) eps + sigma z.
/// With `clip_x0` the haze-free estimate x0_hat - h_hi is clamped to [0,1] and
/// eps is re-derived from the clamped estimate so the two stay consistent.
/// `fresh_noise` is required only when sigma > 0.
template <typename Scalar>
Image<Scalar> sample_step(const Image<Scalar>& x_hi, const Image<Scalar>& eps, const Image<Scalar>& h_hi,
                          const Image<Scalar>& h_lo, int t_hi, int t_lo, const Schedule& s, double sigma = 0.0,
                          const Image<Scalar>* fresh_noise = nullptr, bool clip_x0 = false) {
  IDDM_CHECK(t_lo >= 0 && t_lo < t_hi, ErrorCode::kOutOfRange, "sample_step needs 0 <= t_lo < t_hi");
  s.check_step(t_hi);
  require_same_shape(x_hi, h_hi, "sample_step(x, h_hi)");
  require_same_shape(x_hi, h_lo, "sample_step(x, h_lo)");
  IDDM_CHECK(sigma >= 0.0, ErrorCode::kInvalidArgument, "sigma_t must be >= 0");
  const double rest = 1.0 - s.alpha_bar_at(t_lo) - sigma * sigma;
  IDDM_CHECK(rest >= 0.0, ErrorCode::kInvalidArgument, "1 - abar_{t-1} - sigma_t^2 is negative");

  Image<Scalar> base = predict_x0(x_hi, eps, t_hi, s);
  Image<Scalar> direction = eps;
  if (clip_x0) {
    Image<Scalar> clear = base;
    clear.data = (base.data - h_hi.data).max(Scalar(0)).min(Scalar(1));
    const auto root = static_cast<Scalar>(std::sqrt(s.alpha_bar_at(t_hi)));
    const auto c_t = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_bar_at(t_hi)));
    direction.data = (x_hi.data - root * (clear.data + h_hi.data)) / c_t;
    base.data = clear.data + h_lo.data;
  } else {
    base.data = base.data - (h_hi.data - h_lo.data);
  }
  const auto a = static_cast<Scalar>(std::sqrt(s.alpha_bar_at(t_lo)));
  const auto b = static_cast<Scalar>(std::sqrt(rest));
  Image<Scalar> out = x_hi;
  out.data = a * base.data + b * direction.data;
  if (sigma > 0.0) {
    IDDM_CHECK(fresh_noise != nullptr, ErrorCode::kInvalidArgument, "sigma_t > 0 needs fresh noise");
    require_same_shape(x_hi, *fresh_noise, "sample_step(x, fresh noise)");
    out.data += static_cast<Scalar>(sigma) * fresh_noise->data;
  }
  return out;
}

/// Runs the reverse process from x_T ~ N(0, I) (drawn from `seed`) down the
/// subsequence, querying `haze` for h~_t and `noise` for eps at every step.
template <typename Scalar>
SampleTrace<Scalar> sample_with(const Image<Scalar>& hazy, const NoisePredictor<Scalar>& noise,
                                const HazePredictor<Scalar>& haze, const Schedule& s, const SamplerConfig& cfg,
                                std::uint64_t seed) {
  const std::vector<int>& steps = cfg.subsequence.steps;
  IDDM_CHECK(!steps.empty() && steps.back() == s.steps, ErrorCode::kInvalidArgument,
             "subsequence must end at the schedule's T");
  std::mt19937_64 rng(seed);
  SampleTrace<Scalar> trace;
  Image<Scalar> x = standard_normal<Scalar>(hazy.height, hazy.width, hazy.channels, rng);
  Image<Scalar> h_hi = haze(x, hazy, steps.back());
  trace.h_total = h_hi;

  for (std::size_t i = steps.size(); i-- > 0;) {
    const int t_hi = steps[i];
    const int t_lo = i > 0 ? steps[i - 1] : 0;
    Image<Scalar> eps = noise(x, h_hi, hazy, t_hi);
    IDDM_CHECK((eps.data.isFinite()).all(), ErrorCode::kNumerical, "noise prediction is not finite");
    Image<Scalar> h_lo = t_lo > 0 ? haze(x, hazy, t_lo) : Image<Scalar>::zeros(x.height, x.width, x.channels);
    Image<Scalar> fresh;
    const double sigma = cfg.sigma_at(i);
    if (sigma > 0.0) fresh = standard_normal<Scalar>(x.height, x.width, x.channels, rng);
    Image<Scalar> next =
        sample_step(x, eps, h_hi, h_lo, t_hi, t_lo, s, sigma, sigma > 0.0 ? &fresh : nullptr, cfg.clip_x0);
    trace.steps.push_back({t_hi, std::move(x), std::move(eps), std::move(h_hi)});
    x = std::move(next);
    h_hi = std::move(h_lo);
  }
  trace.x0 = std::move(x);
  return trace;
}

/// sample_with backed by trained networks.
SampleTrace<float> sample(const ImageTensor& hazy, const ModelParams<float>& denoiser, const ModelParams<float>& htnet,
                          const Schedule& s, const SamplerConfig& cfg, std::uint64_t seed);

/// Separable Gaussian blur (radius ceil(3 sigma), half-sample symmetric reflection).
template <typename Scalar>
Image<Scalar> gaussian_blur(const Image<Scalar>& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;

  auto reflect = [](int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
  };
  Image<Scalar> tmp(img.height, img.width, img.channels);
  Image<Scalar> out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * img(y, reflect(x + i, img.width), c);
        tmp(y, x, c) = static_cast<Scalar>(acc);
      }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tmp(reflect(y + i, img.height), x, c);
        out(y, x, c) = static_cast<Scalar>(acc);
      }
  return out;
}

/// Blur, then min-max normalize to [0,1] (jointly over channels unless
/// configured per channel). A constant map normalizes to zeros.
template <typename Scalar>
Image<Scalar> stabilize_haze(const Image<Scalar>& h_total, const SamplerConfig& cfg) {
  IDDM_CHECK((h_total.data >= Scalar(0)).all(), ErrorCode::kInvalidArgument, "haze estimate must be non-negative");
  Image<Scalar> out = gaussian_blur(h_total, cfg.blur_sigma);
  auto px = out.by_pixel();
  auto normalize = [](auto&& block) {
    const Scalar lo = block.minCoeff();
    const Scalar hi = block.maxCoeff();
    if (hi > lo)
      block = (block - lo) / (hi - lo);
    else
      block.setZero();
  };
  if (cfg.per_channel_normalization) {
    for (int c = 0; c < out.channels; ++c) normalize(px.row(c));
  } else {
    normalize(px);
  }
  return out;
}

/// J = x_0 / max(1 - h~, floor), clamped to [0,1].
template <typename Scalar>
Image<Scalar> restore(const Image<Scalar>& x0, const Image<Scalar>& h_stab, const SamplerConfig& cfg) {
  require_same_shape(x0, h_stab, "restore");
  IDDM_CHECK(cfg.denominator_floor > 0.0 && cfg.denominator_floor < 1.0, ErrorCode::kInvalidArgument,
             "denominator_floor must lie in (0, 1)");
  Image<Scalar> out = x0;
  out.data = x0.data / (Scalar(1) - h_stab.data).max(static_cast<Scalar>(cfg.denominator_floor));
  return clamp01(std::move(out));
}

/// Per-step PNGs (x_t mapped from [-1,1], h_t) plus summary.json.
void export_trace(const SampleTrace<float>& trace, const std::filesystem::path& dir);

nlohmann::json trace_summary(const SampleTrace<float>& trace);

}  // namespace iddm
