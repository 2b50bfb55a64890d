// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Plain DDPM forward process and deterministic DDIM update with no haze terms.
// Kept separate from the haze-aware code paths; the haze-free reduction checks
// compare against these bit for bit.

#include <cmath>

#include "iddm/image.hpp"
#include "iddm/schedule.hpp"

namespace iddm::reference {

template <typename Scalar>
Image<Scalar> ddpm_forward(const Image<Scalar>& x0, const Image<Scalar>& noise, int t, const Schedule& s) {
  Image<Scalar> out = x0;
  const auto a = static_cast<Scalar>(std::sqrt(s.alpha_bar[t]));
  const auto b = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_bar[t]));
  out.data = a * x0.data + b * noise.data;
  return out;
}

template <typename Scalar>
Image<Scalar> ddpm_step(const Image<Scalar>& x_prev, const Image<Scalar>& noise, int t, const Schedule& s) {
  Image<Scalar> out = x_prev;
  const auto a = static_cast<Scalar>(std::sqrt(s.alpha[t]));
  const auto b = static_cast<Scalar>(std::sqrt(1.0 - s.alpha[t]));
  out.data = a * x_prev.data + b * noise.data;
  return out;
}

/// Deterministic DDIM: x_prev = sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev) eps.
/// With `clip`, x0_hat is clamped to the data range [0, 1] and eps re-derived from it.
template <typename Scalar>
Image<Scalar> ddim_step(const Image<Scalar>& x_t, const Image<Scalar>& eps, int t, int t_prev, const Schedule& s,
                        bool clip = false) {
  const auto root = static_cast<Scalar>(std::sqrt(s.alpha_bar[t]));
  const auto c_t = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_bar[t]));
  Image<Scalar> x0_hat = x_t;
  x0_hat.data = (x_t.data - c_t * eps.data) / root;
  Image<Scalar> e = eps;
  if (clip) {
    x0_hat.data = x0_hat.data.max(Scalar(0)).min(Scalar(1));
    e.data = (x_t.data - root * x0_hat.data) / c_t;
  }
  const auto a = static_cast<Scalar>(std::sqrt(s.alpha_bar[t_prev]));
  const auto b = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_bar[t_prev]));
  Image<Scalar> out = x_t;
  out.data = a * x0_hat.data + b * e.data;
  return out;
}

}  // namespace iddm::reference
