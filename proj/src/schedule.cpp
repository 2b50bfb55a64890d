// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace iddm {

Schedule schedule_from_betas(const std::vector<double>& betas) {
  IDDM_CHECK(!betas.empty(), ErrorCode::kInvalidArgument, "schedule needs at least one step");
  Schedule s;
  s.steps = static_cast<int>(betas.size());
  s.beta.assign(betas.size() + 1, 0.0);
  s.alpha.assign(betas.size() + 1, 1.0);
  s.alpha_bar.assign(betas.size() + 1, 1.0);
  for (int t = 1; t <= s.steps; ++t) {
    const double b = betas[static_cast<std::size_t>(t - 1)];
    IDDM_CHECK(b > 0.0 && b < 1.0, ErrorCode::kInvalidArgument, "beta must lie in (0, 1)");
    s.beta[t] = b;
    s.alpha[t] = 1.0 - b;
    s.alpha_bar[t] = s.alpha[t] * s.alpha_bar[t - 1];
  }
  return s;
}

Schedule schedule_from_alpha_bar(const std::vector<double>& alpha_bar) {
  IDDM_CHECK(!alpha_bar.empty(), ErrorCode::kInvalidArgument, "schedule needs at least one step");
  Schedule s;
  s.steps = static_cast<int>(alpha_bar.size());
  s.beta.assign(alpha_bar.size() + 1, 0.0);
  s.alpha.assign(alpha_bar.size() + 1, 1.0);
  s.alpha_bar.assign(alpha_bar.size() + 1, 1.0);
  for (int t = 1; t <= s.steps; ++t) {
    const double ab = alpha_bar[static_cast<std::size_t>(t - 1)];
    IDDM_CHECK(std::isfinite(ab) && ab > 0.0 && ab <= 1.0, ErrorCode::kInvalidArgument, "alpha_bar must lie in (0, 1]");
    s.alpha_bar[t] = ab;
    s.alpha[t] = ab / s.alpha_bar[t - 1];
    s.beta[t] = 1.0 - s.alpha[t];
  }
  return s;
}

Schedule make_schedule(int steps, double beta_start, double beta_end) {
  IDDM_CHECK(steps >= 1, ErrorCode::kInvalidArgument, "T must be >= 1");
  IDDM_CHECK(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorCode::kInvalidArgument,
             "need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : double(i) / (steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  return schedule_from_betas(betas);
}

std::pair<double, double> scaled_beta_range(int steps) {
  IDDM_CHECK(steps >= 1, ErrorCode::kInvalidArgument, "T must be >= 1");
  const double scale = 1000.0 / steps;
  return {std::min(kDefaultBetaStart * scale, 0.5), std::min(kDefaultBetaEnd * scale, 0.999)};
}

ScheduleReport check_schedule(const Schedule& s) {
  ScheduleReport r;
  auto fail = [&r](const std::string& why) {
    if (r.ok) r.failure = why;
    r.ok = false;
  };
  const auto n = static_cast<std::size_t>(s.steps) + 1;
  if (s.steps < 1 || s.beta.size() != n || s.alpha.size() != n || s.alpha_bar.size() != n) {
    fail("inconsistent array sizes");
    return r;
  }
  if (s.alpha_bar[0] != 1.0) fail("alpha_bar_0 != 1");
  for (int t = 1; t <= s.steps; ++t) {
    if (!(s.beta[t] > 0.0 && s.beta[t] < 1.0)) fail("beta_" + std::to_string(t) + " outside (0,1)");
    if (!(s.alpha_bar[t] < s.alpha_bar[t - 1])) fail("alpha_bar not strictly decreasing at t=" + std::to_string(t));
    const double rec = std::abs(s.alpha_bar[t] - s.alpha[t] * s.alpha_bar[t - 1]) / s.alpha_bar[t];
    const double var =
        std::abs(s.alpha[t] * (1.0 - s.alpha_bar[t - 1]) + (1.0 - s.alpha[t]) - (1.0 - s.alpha_bar[t]));
    r.max_recursion_error = std::max(r.max_recursion_error, rec);
    r.max_variance_error = std::max(r.max_variance_error, var);
  }
  if (r.max_recursion_error > 1e-12) fail("alpha_bar recursion violated");
  if (r.max_variance_error > 1e-12) fail("variance recursion violated");
  return r;
}

Subsequence subsequence(int steps, int samples) {
  IDDM_CHECK(steps >= 1, ErrorCode::kInvalidArgument, "T must be >= 1");
  IDDM_CHECK(samples >= 1 && samples <= steps, ErrorCode::kInvalidArgument,
             "need 1 <= S <= T (S=" + std::to_string(samples) + ", T=" + std::to_string(steps) + ")");
  Subsequence sub;
  for (int i = 1; i <= samples; ++i) {
    const int t = static_cast<int>(std::lround(double(i - 1) * steps / samples)) + 1;
    if (sub.steps.empty() || sub.steps.back() < t) sub.steps.push_back(t);
  }
  if (sub.steps.back() != steps) sub.steps.push_back(steps);
  return sub;
}

}  // namespace iddm
