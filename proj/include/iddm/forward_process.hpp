// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Haze-augmented forward diffusion. Noise is always supplied by the caller so
// that oracle checks can replay exact draws.

#include <cmath>
#include <random>

#include "iddm/image.hpp"
#include "iddm/schedule.hpp"

namespace iddm {

template <typename Scalar>
struct ForwardSample {
  Image<Scalar> x_t;
  int t = 0;
  Image<Scalar> noise;
  Image<Scalar> h_t;
};

/// x_t = sqrt(abar_t) (x_0 + h_t) + sqrt(1 - abar_t) eps.
template <typename Scalar>
ForwardSample<Scalar> diffuse_closed(const Image<Scalar>& x0, const Image<Scalar>& h_t, int t,
                                     const Image<Scalar>& noise, const Schedule& s) {
  require_same_shape(x0, h_t, "diffuse_closed(x0, h_t)");
  require_same_shape(x0, noise, "diffuse_closed(x0, noise)");
  s.check_step(t);
  const auto signal = static_cast<Scalar>(std::sqrt(s.alpha_bar_at(t)));
  const auto spread = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_bar_at(t)));
  ForwardSample<Scalar> out{x0, t, noise, h_t};
  out.x_t.data = signal * (x0.data + h_t.data) + spread * noise.data;
  return out;
}

/// One transition: x_t = sqrt(alpha_t) x_{t-1} + sqrt(1 - alpha_t) eps + sqrt(abar_t) dh_t.
template <typename Scalar>
Image<Scalar> diffuse_step(const Image<Scalar>& x_prev, const Image<Scalar>& dh_t, int t, const Image<Scalar>& noise,
                           const Schedule& s) {
  require_same_shape(x_prev, dh_t, "diffuse_step(x_prev, dh_t)");
  require_same_shape(x_prev, noise, "diffuse_step(x_prev, noise)");
  s.check_step(t);
  const auto keep = static_cast<Scalar>(std::sqrt(s.alpha_at(t)));
  const auto spread = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_at(t)));
  const auto haze = static_cast<Scalar>(std::sqrt(s.alpha_bar_at(t)));
  Image<Scalar> out = x_prev;
  out.data = keep * x_prev.data + spread * noise.data + haze * dh_t.data;
  return out;
}

/// Standard normal tensor drawn from `rng`.
template <typename Scalar, typename Rng>
Image<Scalar> standard_normal(int height, int width, int channels, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Image<Scalar> out(height, width, channels);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data[i] = static_cast<Scalar>(normal(rng));
  return out;
}

/// diffuse_closed with noise drawn from `rng`.
template <typename Scalar, typename Rng>
ForwardSample<Scalar> diffuse(const Image<Scalar>& x0, const Image<Scalar>& h_t, int t, const Schedule& s, Rng& rng) {
  return diffuse_closed(x0, h_t, t, standard_normal<Scalar>(x0.height, x0.width, x0.channels, rng), s);
}

}  // namespace iddm
