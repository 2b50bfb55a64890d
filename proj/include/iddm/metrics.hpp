// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Full-reference metrics. SSIM uses uniform 8x8 windows at stride 8 on the
// channel-mean grayscale image, so values are comparable only within this repo.

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "iddm/image.hpp"

namespace iddm {

/// 10 log10(1 / MSE); +infinity when the images are identical.
double psnr(const ImageTensor& a, const ImageTensor& b);

double ssim(const ImageTensor& a, const ImageTensor& b);

struct ImageScore {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageScore> images;
  double mean_psnr = 0.0;  // infinite entries are skipped
  double mean_ssim = 0.0;

  void add(std::string id, const ImageTensor& restored, const ImageTensor& reference);
  void add(ImageScore score);
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json aggregate_json() const;
};

}  // namespace iddm
