// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Oracle and invariant checks bundled with the library so that release builds
// can self-verify (`iddm verify`).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iddm/schedule.hpp"

namespace iddm {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  /// "<=" or ">=" for numeric checks against `tolerance`, empty for yes/no checks.
  std::string comparison;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  /// Schedule under test; unset means make_schedule(1000).
  std::optional<Schedule> schedule;
  std::uint64_t seed = 0;
};

/// physics, schedule, forward, sampler, gradients.
const std::vector<std::string>& verify_suites();

/// Runs one suite, or every suite for "all". Unknown names throw kInvalidArgument.
std::vector<CheckResult> run_verify(const std::string& suite, const VerifyOptions& opts = {});

/// Reads {"betas": [...]} or {"alpha_bar": [...]} (steps 1..T).
Schedule schedule_from_json(const nlohmann::json& j);

/// Central-difference check of `coords` random parameter coordinates in double
/// precision. Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
struct GradientCheck {
  int checked = 0;
  int failures = 0;
  double max_relative_error = 0.0;
};
GradientCheck check_network_gradients(bool haze_estimator, int coords, double step, double tolerance,
                                      std::uint64_t seed, double floor = 1e-6);

std::string format_check(const CheckResult& r);

}  // namespace iddm
