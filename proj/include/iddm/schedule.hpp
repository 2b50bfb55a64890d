// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "iddm/error.hpp"

namespace iddm {

/// Linear-beta diffusion schedule. Arrays are indexed by timestep 0..T with
/// beta[0] = 0 and alpha_bar[0] = 1.
struct Schedule {
  int steps = 0;  // T
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t)); }
  double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<std::size_t>(t)); }

  void check_step(int t, int lo = 1) const {
    IDDM_CHECK(t >= lo && t <= steps, ErrorCode::kOutOfRange,
               "timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(steps) + "]");
  }
};

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

Schedule make_schedule(int steps, double beta_start = kDefaultBetaStart, double beta_end = kDefaultBetaEnd);

/// Schedule from explicit per-step betas (beta_1..beta_T).
Schedule schedule_from_betas(const std::vector<double>& betas);

/// Schedule from cumulative products abar_1..abar_T. Only finiteness and the
/// range (0, 1] are enforced; use check_schedule for the structural checks.
Schedule schedule_from_alpha_bar(const std::vector<double>& alpha_bar);

/// Beta endpoints rescaled by 1000/T so that alpha_bar_T stays near its T = 1000 value.
std::pair<double, double> scaled_beta_range(int steps);

struct ScheduleReport {
  bool ok = true;
  double max_recursion_error = 0.0;  // |abar_t - alpha_t abar_{t-1}| / abar_t
  double max_variance_error = 0.0;   // |alpha_t (1 - abar_{t-1}) + (1 - alpha_t) - (1 - abar_t)|
  std::string failure;
};

/// Checks 0 < beta < 1, abar_0 = 1, strict decrease, and both recursions.
ScheduleReport check_schedule(const Schedule& s);

/// Evenly spaced sampling timesteps, ascending, with T forced in as the last element.
struct Subsequence {
  std::vector<int> steps;
  int count() const { return static_cast<int>(steps.size()); }
};

Subsequence subsequence(int steps, int samples);

}  // namespace iddm
