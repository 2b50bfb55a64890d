// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/verify.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>

#include "iddm/asm_physics.hpp"
#include "iddm/checkpoint.hpp"
#include "iddm/forward_process.hpp"
#include "iddm/imaging_io.hpp"
#include "iddm/metrics.hpp"
#include "iddm/reference.hpp"
#include "iddm/sampler.hpp"
#include "iddm/training.hpp"

namespace iddm {
namespace {

using Rng = std::mt19937_64;

struct Suite {
  std::string name;
  const VerifyOptions& opts;
  std::vector<CheckResult>& out;

  // measured <= tolerance passes.
  void upper(const std::string& check, double measured, double tolerance, std::string detail = {}) {
    out.push_back({name, check, std::isfinite(measured) && measured <= tolerance, "<=", measured, tolerance,
                   std::move(detail)});
  }
  // measured >= bound passes.
  void lower(const std::string& check, double measured, double bound, std::string detail = {}) {
    out.push_back({name, check, measured >= bound, ">=", measured, bound, std::move(detail)});
  }
  void flag(const std::string& check, bool ok, std::string detail = {}) {
    out.push_back({name, check, ok, "", ok ? 1.0 : 0.0, 1.0, std::move(detail)});
  }
  // Runs `body`, turning any library error into a failed check.
  void guarded(const std::string& check, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      out.push_back({name, check, false, "", std::nan(""), 0.0, e.what()});
    }
  }
  Schedule schedule() const { return opts.schedule.value_or(make_schedule(1000)); }
};

HazeParams random_params(Rng& rng) {
  std::uniform_real_distribution<double> a(0.7, 1.0);
  std::uniform_real_distribution<double> s(0.4, 1.5);
  const double airlight = a(rng);
  return HazeParams::uniform(airlight, s(rng));
}

Depth<double> random_depth(int h, int w, double max_depth, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, max_depth);
  Depth<double> d(h, w);
  for (Eigen::Index i = 0; i < d.data.size(); ++i) d.data[i] = u(rng);
  return d;
}

template <typename Scalar>
Image<Scalar> random_image(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image<Scalar> img(h, w, c);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data[i] = static_cast<Scalar>(u(rng));
  return img;
}

template <typename Scalar>
bool bit_identical(const Image<Scalar>& a, const Image<Scalar>& b) {
  return a.same_shape(b) && std::memcmp(a.data.data(), b.data.data(), sizeof(Scalar) * std::size_t(a.size())) == 0;
}

template <typename Scalar>
double max_abs_diff(const Image<Scalar>& a, const Image<Scalar>& b) {
  require_same_shape(a, b, "max_abs_diff");
  return static_cast<double>((a.data - b.data).abs().maxCoeff());
}

// Trapezoidal rule for A * integral_0^Z exp(-sigma z) dz.
double haze_quadrature(double airlight, double sigma, double depth, int panels) {
  const double dz = depth / panels;
  double acc = 0.5 * (1.0 + std::exp(-sigma * depth));
  for (int i = 1; i < panels; ++i) acc += std::exp(-sigma * dz * i);
  return airlight * acc * dz;
}

void physics_suite(Suite& s) {
  Rng rng(s.opts.seed ^ 0x9a1);
  for (int total : {1, 10, 1000}) {
    s.guarded("haze telescoping T=" + std::to_string(total), [&] {
      double worst = 0.0;
      for (int draw = 0; draw < 5; ++draw) {
        const HazeParams p = random_params(rng);
        const Depth<double> z = random_depth(4, 4, 3.0, rng);
        Image<double> acc = Image<double>::zeros(4, 4, 3);
        for (int t = 1; t <= total; ++t) acc.data += haze_increment(z, p, t, total).data;
        worst = std::max(worst, max_abs_diff(acc, haze_total(z, p)));
      }
      s.upper("haze telescoping T=" + std::to_string(total), worst, 1e-6);
    });
  }
  s.guarded("haze quadrature", [&] {
    double worst = 0.0;
    for (int draw = 0; draw < 20; ++draw) {
      const HazeParams p = random_params(rng);
      const double z = std::uniform_real_distribution<double>(0.05, 3.0)(rng);
      const Depth<double> d = Depth<double>::constant(1, 1, z);
      const double closed = haze_total(d, p).data[0];
      const double numeric = haze_quadrature(p.airlight[0], p.scattering, z, 1000000);
      worst = std::max(worst, std::abs(closed - numeric) / std::abs(numeric));
    }
    s.upper("haze quadrature (20 draws, 1e6 panels)", worst, 1e-8);
  });
  s.guarded("hazy decomposition", [&] {
    auto [clear, depth] = generate_scene(s.opts.seed, 16, 16);
    const HazeDecomposition<float> d = synthesize_hazy(clear, depth, random_params(rng));
    const float err = (d.hazy.data - d.attenuated.data - d.haze_total.data).abs().maxCoeff();
    s.upper("hazy - x0 - h_T", err, 1e-6);
  });
  s.guarded("haze monotone in t", [&] {
    const HazeParams p = random_params(rng);
    const Depth<double> z = random_depth(4, 4, 3.0, rng);
    bool ok = true;
    Image<double> prev = haze_at_step(z, p, 0, 50);
    for (int t = 1; t <= 50; ++t) {
      Image<double> cur = haze_at_step(z, p, t, 50);
      ok = ok && (cur.data >= prev.data).all() && (haze_increment(z, p, t, 50).data >= 0.0).all();
      prev = std::move(cur);
    }
    ok = ok && (prev.data == haze_total(z, p).data).all();
    s.flag("h_t monotone, h_T reached at t=T", ok);
  });
  s.guarded("transmission range", [&] {
    const Depth<double> z = random_depth(8, 8, 3.0, rng);
    const Image<double> tr = transmission(z, 1.2);
    s.flag("transmission in (0, 1]", (tr.data > 0.0).all() && (tr.data <= 1.0).all());
  });
}

void schedule_suite(Suite& s) {
  s.guarded("schedule", [&] {
    const Schedule sched = s.schedule();
    const ScheduleReport r = check_schedule(sched);
    s.flag("structure (0<beta<1, abar_0=1, abar decreasing)", r.ok, r.failure);
    s.upper("variance recursion", r.max_variance_error, 1e-12);
    s.upper("alpha_bar recursion (relative)", r.max_recursion_error, 1e-12);
    const int samples = std::min(10, sched.steps);
    const Subsequence sub = subsequence(sched.steps, samples);
    bool ok = sub.steps.back() == sched.steps && sub.steps.front() >= 1;
    for (std::size_t i = 1; i < sub.steps.size(); ++i) ok = ok && sub.steps[i] > sub.steps[i - 1];
    s.flag("subsequence ascending and ends at T", ok);
  });
}

void forward_suite(Suite& s) {
  Rng rng(s.opts.seed ^ 0xf02);
  auto telescoping = [&](const Schedule& sched, double tol) {
    const std::string name = "zero-noise forward telescoping T=" + std::to_string(sched.steps);
    s.guarded(name, [&] {
      const HazeParams p = random_params(rng);
      const Depth<double> z = random_depth(8, 8, 3.0, rng);
      const Image<double> x0 = random_image<double>(8, 8, 3, rng);
      const Image<double> zero = Image<double>::zeros(8, 8, 3);
      Image<double> x = x0;
      for (int t = 1; t <= sched.steps; ++t) x = diffuse_step(x, haze_increment(z, p, t, sched.steps), t, zero, sched);
      Image<double> expect = x0;
      expect.data = std::sqrt(sched.alpha_bar_at(sched.steps)) * (x0.data + haze_total(z, p).data);
      s.upper(name, max_abs_diff(x, expect), tol);
    });
  };
  const Schedule sched = s.schedule();
  telescoping(sched, sched.steps <= 50 ? 1e-6 : 1e-4);
  if (!s.opts.schedule) telescoping(make_schedule(50), 1e-6);

  s.guarded("single step matches closed form", [&] {
    const HazeParams p = random_params(rng);
    const Depth<double> z = random_depth(8, 8, 3.0, rng);
    const Image<double> x0 = random_image<double>(8, 8, 3, rng);
    const Image<double> eps = standard_normal<double>(8, 8, 3, rng);
    const Image<double> a = diffuse_step(x0, haze_increment(z, p, 1, sched.steps), 1, eps, sched);
    const Image<double> b = diffuse_closed(x0, haze_at_step(z, p, 1, sched.steps), 1, eps, sched).x_t;
    s.upper("single step matches closed form", max_abs_diff(a, b), 1e-12);
  });
  s.guarded("haze-free forward equals DDPM", [&] {
    const Image<float> x0 = random_image<float>(16, 16, 3, rng, -1.0, 1.0);
    const Image<float> zero = Image<float>::zeros(16, 16, 3);
    bool ok = true;
    for (int t : {1, sched.steps / 2 + 1, sched.steps}) {
      const Image<float> eps = standard_normal<float>(16, 16, 3, rng);
      ok = ok && bit_identical(diffuse_closed(x0, zero, t, eps, sched).x_t, reference::ddpm_forward(x0, eps, t, sched));
      ok = ok && bit_identical(diffuse_step(x0, zero, t, eps, sched), reference::ddpm_step(x0, eps, t, sched));
    }
    s.flag("haze-free forward bit-identical to DDPM", ok);
  });
}

// Oracle predictors that know x0 and the true haze: with these the sampler
// must walk back to x0 up to rounding.
SampleTrace<float> oracle_sample(const ImageTensor& x0, const DepthMap& z, const HazeParams& p, const ImageTensor& hazy,
                                 const Schedule& sched, int samples, std::uint64_t seed) {
  const NoisePredictor<float> noise = [&](const ImageTensor& x_t, const ImageTensor& h_t, const ImageTensor&, int t) {
    ImageTensor eps = x_t;
    const auto a = static_cast<float>(std::sqrt(sched.alpha_bar_at(t)));
    const auto c = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar_at(t)));
    eps.data = (x_t.data - a * (x0.data + h_t.data)) / c;
    return eps;
  };
  const HazePredictor<float> haze = [&](const ImageTensor&, const ImageTensor&, int t) {
    return haze_at_step(z, p, t, sched.steps);
  };
  SamplerConfig cfg;
  cfg.subsequence = subsequence(sched.steps, samples);
  return sample_with(hazy, noise, haze, sched, cfg, seed);
}

void sampler_suite(Suite& s) {
  Rng rng(s.opts.seed ^ 0x5a3);
  const Schedule sched = s.schedule();
  s.guarded("oracle round trip", [&] {
    double worst = 0.0;
    for (int k = 0; k < 8; ++k) {
      auto [clear, z] = generate_scene(s.opts.seed * 131 + std::uint64_t(k), 32, 32);
      const HazeParams p = random_params(rng);
      const HazeDecomposition<float> d = synthesize_hazy(clear, z, p);
      const SampleTrace<float> tr = oracle_sample(d.attenuated, z, p, d.hazy, sched, std::min(10, sched.steps), k);
      worst = std::max(worst, max_abs_diff(tr.x0, d.attenuated));
    }
    s.upper("oracle sampler recovers x0 (8 scenes, S=10)", worst, 1e-3);
  });
  s.guarded("restoration inversion", [&] {
    const ImageTensor clear = random_image<float>(32, 32, 3, rng);
    const ImageTensor tr = random_image<float>(32, 32, 3, rng, 0.1, 1.0);
    ImageTensor x0 = clear;
    x0.data = clear.data * tr.data;
    ImageTensor h = tr;
    h.data = 1.0f - tr.data;
    s.lower("restore(J*T_r, 1-T_r) PSNR dB", psnr(restore(x0, h, SamplerConfig{}), clear), 50.0);
  });
  s.guarded("stabilized haze range", [&] {
    auto [clear, z] = generate_scene(s.opts.seed + 7, 32, 32);
    const ImageTensor h = stabilize_haze(haze_total(z, random_params(rng)), SamplerConfig{});
    s.flag("stabilized haze spans [0, 1]", h.data.minCoeff() == 0.0f && h.data.maxCoeff() == 1.0f);
  });
  s.guarded("haze-free sampler equals DDIM", [&] {
    const NoisePredictor<float> noise = [](const ImageTensor& x_t, const ImageTensor&, const ImageTensor&, int t) {
      ImageTensor e = x_t;
      e.data = (x_t.data * 0.7f + 0.001f * float(t)).tanh();
      return e;
    };
    const HazePredictor<float> haze = [](const ImageTensor& x_t, const ImageTensor&, int) {
      return ImageTensor::zeros(x_t.height, x_t.width, x_t.channels);
    };
    const ImageTensor hazy = random_image<float>(16, 16, 3, rng);
    const std::uint64_t seed = s.opts.seed + 3;
    for (bool clip : {false, true}) {
      SamplerConfig cfg;
      cfg.subsequence = subsequence(sched.steps, std::min(10, sched.steps));
      cfg.clip_x0 = clip;
      const SampleTrace<float> ours = sample_with(hazy, noise, haze, sched, cfg, seed);

      std::mt19937_64 ref_rng(seed);
      ImageTensor x = standard_normal<float>(16, 16, 3, ref_rng);
      const auto& steps = cfg.subsequence.steps;
      for (std::size_t i = steps.size(); i-- > 0;) {
        const int t_lo = i > 0 ? steps[i - 1] : 0;
        x = reference::ddim_step(x, noise(x, hazy, hazy, steps[i]), steps[i], t_lo, sched, clip);
      }
      s.flag(std::string("haze-free sampler bit-identical to DDIM") + (clip ? " (clipped x0)" : ""),
             bit_identical(ours.x0, x));
    }
  });
}

void gradients_suite(Suite& s) {
  for (bool htnet : {false, true}) {
    const std::string name = std::string(htnet ? "htnet" : "denoiser") + " parameter gradients";
    s.guarded(name, [&] {
      const GradientCheck g = check_network_gradients(htnet, 100, 1e-4, 1e-3, s.opts.seed + (htnet ? 1 : 0));
      s.upper(name + " (100 coords)", g.max_relative_error, 1e-3,
              std::to_string(g.failures) + "/" + std::to_string(g.checked) + " over tolerance");
    });
  }
  s.guarded("stage-2 objective", [&] {
    TrainConfig cfg;
    cfg.batch = 2;
    cfg.patch = 16;
    cfg.scene_size = 16;
    cfg.base_width = 4;
    cfg.time_dim = 8;
    cfg.seed = s.opts.seed;
    const SceneSource src = SceneSource::procedural(4, 16, cfg.seed);
    TrainRng rng(cfg.seed);
    const TrainBatch batch = sample_batch(src, cfg, rng);
    const Schedule sched = cfg.schedule();
    const ModelParams<float> denoiser = init_params<float>(cfg.denoiser_arch(), cfg.seed + 11);
    const std::vector<ImageTensor> x_t = diffuse_batch(batch, sched);
    s.upper("stage-2 loss at ground-truth haze", stage2_objective(denoiser, batch, x_t, batch.h_t).loss(), 0.0);

    const std::uint64_t before = fingerprint(denoiser);
    ModelParams<float> htnet = init_params<float>(cfg.htnet_arch(), cfg.seed + 12);
    for (int i = 0; i < 5; ++i) stage2_step(htnet, denoiser, sample_batch(src, cfg, rng), sched, cfg, cfg.lr);
    s.flag("stage 2 leaves the denoiser untouched", fingerprint(denoiser) == before);
  });
}

}  // namespace

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"physics", "schedule", "forward", "sampler", "gradients"};
  return names;
}

std::vector<CheckResult> run_verify(const std::string& suite, const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  auto run_one = [&](const std::string& name) {
    Suite s{name, opts, out};
    if (name == "physics") physics_suite(s);
    else if (name == "schedule") schedule_suite(s);
    else if (name == "forward") forward_suite(s);
    else if (name == "sampler") sampler_suite(s);
    else if (name == "gradients") gradients_suite(s);
    else throw Error(ErrorCode::kInvalidArgument, "unknown suite '" + name + "'");
  };
  if (suite == "all") {
    for (const auto& name : verify_suites()) run_one(name);
  } else {
    run_one(suite);
  }
  return out;
}

Schedule schedule_from_json(const nlohmann::json& j) {
  if (j.contains("betas")) return schedule_from_betas(j["betas"].get<std::vector<double>>());
  if (j.contains("alpha_bar")) return schedule_from_alpha_bar(j["alpha_bar"].get<std::vector<double>>());
  throw Error(ErrorCode::kInvalidArgument, "schedule file needs a \"betas\" or \"alpha_bar\" array");
}

GradientCheck check_network_gradients(bool haze_estimator, int coords, double step, double tolerance,
                                      std::uint64_t seed, double floor) {
  Architecture arch = haze_estimator ? htnet_architecture(HtnetInputs::kStateAndHazy, 4, 2) : denoiser_architecture(4, 2);
  arch.time_dim = 8;
  ModelParams<double> p = init_params<double>(arch, seed);
  Rng rng(seed ^ 0x6e7);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (auto& [name, v] : p.values)
    if (name.ends_with(".bias"))
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = normal(rng);

  constexpr int kBatch = 2;
  constexpr int kSize = 8;
  std::vector<Image<double>> x_t, h_t, hazy, weight;
  for (int n = 0; n < kBatch; ++n) {
    x_t.push_back(standard_normal<double>(kSize, kSize, 3, rng));
    h_t.push_back(random_image<double>(kSize, kSize, 3, rng));
    hazy.push_back(random_image<double>(kSize, kSize, 3, rng));
    weight.push_back(standard_normal<double>(kSize, kSize, 3, rng));
  }
  const std::vector<int> t{7, 153};
  auto forward = [&](ForwardOptions o) {
    return haze_estimator ? htnet_forward<double>(p, x_t, hazy, t, o) : denoiser_forward<double>(p, x_t, h_t, hazy, t, o);
  };
  auto objective = [&] {
    double acc = 0.0;
    const auto out = forward({});
    for (int n = 0; n < kBatch; ++n) acc += (out[std::size_t(n)].data * weight[std::size_t(n)].data).sum();
    return acc;
  };

  forward({.record = true});
  backward<double>(p, weight);

  std::vector<std::pair<std::string, Eigen::Index>> all;
  for (const auto& [name, v] : p.values)
    for (Eigen::Index i = 0; i < v.size(); ++i) all.emplace_back(name, i);
  std::shuffle(all.begin(), all.end(), rng);

  GradientCheck g;
  for (int k = 0; k < coords && k < int(all.size()); ++k) {
    const auto& [name, i] = all[std::size_t(k)];
    double& w = p.values[name].data()[i];
    const double keep = w;
    w = keep + step;
    const double up = objective();
    w = keep - step;
    const double down = objective();
    w = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = p.grads.at(name).data()[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    g.max_relative_error = std::max(g.max_relative_error, rel);
    g.failures += rel > tolerance;
    ++g.checked;
  }
  return g;
}

std::string format_check(const CheckResult& r) {
  std::string line = std::string(r.passed ? "PASS" : "FAIL") + "  " + r.suite + ": " + r.name;
  if (!r.comparison.empty()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "  %.3e %s %.1e", r.measured, r.comparison.c_str(), r.tolerance);
    line += buf;
  }
  if (!r.detail.empty()) line += "  [" + r.detail + "]";
  return line;
}

}  // namespace iddm
