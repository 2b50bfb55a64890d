// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/sampler.hpp"

#include <cstdio>
#include <fstream>

#include "iddm/imaging_io.hpp"

namespace iddm {

nlohmann::json SamplerConfig::to_json() const {
  return {{"subsequence", subsequence.steps},
          {"ddim_sigma", ddim_sigma},
          {"denominator_floor", denominator_floor},
          {"blur_sigma", blur_sigma},
          {"per_channel_normalization", per_channel_normalization},
          {"clip_x0", clip_x0}};
}

SampleTrace<float> sample(const ImageTensor& hazy, const ModelParams<float>& denoiser, const ModelParams<float>& htnet,
                          const Schedule& s, const SamplerConfig& cfg, std::uint64_t seed) {
  IDDM_CHECK(denoiser.all_finite() && htnet.all_finite(), ErrorCode::kNumerical, "network parameters contain NaN/Inf");
  IDDM_CHECK(!denoiser.values.empty() && !htnet.values.empty(), ErrorCode::kNotInitialized, "untrained networks");
  NoisePredictor<float> noise = [&denoiser](const ImageTensor& x, const ImageTensor& h, const ImageTensor& hz, int t) {
    return denoiser_predict(denoiser, x, h, hz, t);
  };
  HazePredictor<float> haze = [&htnet](const ImageTensor& x, const ImageTensor& hz, int t) {
    return htnet_predict(htnet, x, hz, t);
  };
  return sample_with<float>(hazy, noise, haze, s, cfg, seed);
}

nlohmann::json trace_summary(const SampleTrace<float>& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& r : trace.steps) {
    steps.push_back({{"t", r.t},
                     {"eps_max_abs", r.eps.data.abs().maxCoeff()},
                     {"eps_mean", r.eps.data.mean()},
                     {"haze_max", r.h_t.data.maxCoeff()},
                     {"haze_mean", r.h_t.data.mean()}});
  }
  return {{"steps", steps},
          {"x0_min", trace.x0.data.minCoeff()},
          {"x0_max", trace.x0.data.maxCoeff()},
          {"haze_total_mean", trace.h_total.data.mean()}};
}

void export_trace(const SampleTrace<float>& trace, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char name[64];
  for (const auto& r : trace.steps) {
    ImageTensor shown = r.x_t;
    shown.data = (r.x_t.data + 1.0f) * 0.5f;
    std::snprintf(name, sizeof(name), "step_%04d_x.png", r.t);
    save_image(shown, dir / name);
    std::snprintf(name, sizeof(name), "step_%04d_h.png", r.t);
    save_image(r.h_t, dir / name);
  }
  std::ofstream out(dir / "summary.json");
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, (dir / "summary.json").string());
  out << trace_summary(trace).dump(2) << "\n";
}

}  // namespace iddm
