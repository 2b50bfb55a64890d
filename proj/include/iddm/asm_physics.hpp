// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Atmospheric scattering model and its time-reindexed haze decomposition.
//
// Airlight convention: with h(Z) = A * integral_0^Z exp(-sigma z) dz the haze
// component is A' (1 - T_r) with A' = A / sigma.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "iddm/image.hpp"

namespace iddm {

struct HazeParams {
  /// Per-channel airlight A; a scalar airlight is three equal entries.
  Eigen::Array3d airlight = Eigen::Array3d::Constant(1.0);
  /// Scattering coefficient sigma (inverse depth units).
  double scattering = 1.0;

  static HazeParams uniform(double airlight, double scattering) {
    return {Eigen::Array3d::Constant(airlight), scattering};
  }

  /// A' = A / sigma, the haze value approached at infinite depth.
  Eigen::Array3d saturation() const { return airlight / scattering; }

  void validate() const {
    IDDM_CHECK(std::isfinite(scattering) && scattering > 0.0, ErrorCode::kInvalidArgument,
               "scattering coefficient must be > 0");
    IDDM_CHECK((airlight > 0.0).all() && (airlight <= 2.0).all(), ErrorCode::kInvalidArgument,
               "airlight components must lie in (0, 2]");
  }
};

template <typename Scalar>
struct HazeDecomposition {
  Image<Scalar> attenuated;    // x_0 = J * T_r
  Image<Scalar> haze_total;    // h_T
  Image<Scalar> hazy;          // x_0 + h_T
  Image<Scalar> transmission;  // T_r
};

namespace detail {

// (A/sigma) * (1 - exp(-sigma * fraction * Z)) per pixel, broadcast over 3 channels.
template <typename Scalar>
Image<Scalar> haze_fraction(const Depth<Scalar>& depth, const HazeParams& p, double fraction) {
  p.validate();
  const Eigen::Array3d sat = p.saturation();
  const Scalar rate = static_cast<Scalar>(p.scattering * fraction);
  Image<Scalar> out(depth.height, depth.width, 3);
  auto px = out.by_pixel();
  for (Eigen::Index i = 0; i < depth.data.size(); ++i) {
    const Scalar g = -std::expm1(-rate * depth.data[i]);
    for (int c = 0; c < 3; ++c) px(c, i) = static_cast<Scalar>(sat[c]) * g;
  }
  return out;
}

inline void check_step(int t, int total, int lo) {
  IDDM_CHECK(total >= 1, ErrorCode::kOutOfRange, "total steps must be >= 1");
  IDDM_CHECK(t >= lo && t <= total, ErrorCode::kOutOfRange,
             "timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(total) + "]");
}

}  // namespace detail

/// T_r = exp(-sigma Z), broadcast to `channels`.
template <typename Scalar>
Image<Scalar> transmission(const Depth<Scalar>& depth, double sigma, int channels = 3) {
  IDDM_CHECK(std::isfinite(sigma) && sigma > 0.0, ErrorCode::kInvalidArgument, "sigma must be > 0");
  Image<Scalar> out(depth.height, depth.width, channels);
  auto px = out.by_pixel();
  const Scalar s = static_cast<Scalar>(sigma);
  for (Eigen::Index i = 0; i < depth.data.size(); ++i) px.col(i).setConstant(std::exp(-s * depth.data[i]));
  return out;
}

/// h(Z) = (A / sigma) (1 - exp(-sigma Z)).
template <typename Scalar>
Image<Scalar> haze_total(const Depth<Scalar>& depth, const HazeParams& p) {
  return detail::haze_fraction(depth, p, 1.0);
}

/// Haze accumulated over the first t of T depth segments:
/// h_t = (A / sigma) (1 - exp(-sigma (t/T) Z)).
template <typename Scalar>
Image<Scalar> haze_at_step(const Depth<Scalar>& depth, const HazeParams& p, int t, int total) {
  detail::check_step(t, total, 0);
  return detail::haze_fraction(depth, p, static_cast<double>(t) / total);
}

/// Delta h_t = h_t - h_{t-1} = (A / sigma) (exp(-sigma (t-1) Z / T) - exp(-sigma t Z / T)), always >= 0.
template <typename Scalar>
Image<Scalar> haze_increment(const Depth<Scalar>& depth, const HazeParams& p, int t, int total) {
  detail::check_step(t, total, 1);
  p.validate();
  const Eigen::Array3d sat = p.saturation();
  const Scalar r_lo = static_cast<Scalar>(p.scattering * (t - 1) / total);
  const Scalar r_hi = static_cast<Scalar>(p.scattering * t / total);
  Image<Scalar> out(depth.height, depth.width, 3);
  auto px = out.by_pixel();
  for (Eigen::Index i = 0; i < depth.data.size(); ++i) {
    const Scalar z = depth.data[i];
    const Scalar d = std::max(Scalar(0), std::exp(-r_lo * z) - std::exp(-r_hi * z));
    for (int c = 0; c < 3; ++c) px(c, i) = static_cast<Scalar>(sat[c]) * d;
  }
  return out;
}

/// Hazy image x^ = J * T_r + h_T together with its two parts.
template <typename Scalar>
HazeDecomposition<Scalar> synthesize_hazy(const Image<Scalar>& clear, const Depth<Scalar>& depth,
                                          const HazeParams& p) {
  IDDM_CHECK(clear.height == depth.height && clear.width == depth.width, ErrorCode::kShapeMismatch,
             "clear image and depth map differ in size");
  IDDM_CHECK(clear.channels == 3, ErrorCode::kShapeMismatch, "clear image must have 3 channels");
  HazeDecomposition<Scalar> d;
  d.transmission = transmission(depth, p.scattering, 3);
  d.haze_total = haze_total(depth, p);
  d.attenuated = clear;
  d.attenuated.data = clear.data * d.transmission.data;
  d.hazy = d.attenuated;
  d.hazy.data = d.attenuated.data + d.haze_total.data;
  return d;
}

}  // namespace iddm
