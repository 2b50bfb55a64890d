// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/metrics.hpp"

#include <cmath>
#include <fstream>

namespace iddm {

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  const double mse = (a.data.cast<double>() - b.data.cast<double>()).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

Eigen::ArrayXXd gray(const ImageTensor& img) {
  Eigen::ArrayXXd g(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels; ++c) s += img(y, x, c);
      g(y, x) = s / img.channels;
    }
  return g;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  constexpr int kWindow = 8;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  require_same_shape(a, b, "ssim");
  IDDM_CHECK(a.height >= kWindow && a.width >= kWindow, ErrorCode::kInvalidArgument,
             "ssim needs images of at least 8x8");
  const Eigen::ArrayXXd ga = gray(a);
  const Eigen::ArrayXXd gb = gray(b);
  double total = 0.0;
  int windows = 0;
  for (int y = 0; y + kWindow <= a.height; y += kWindow)
    for (int x = 0; x + kWindow <= a.width; x += kWindow) {
      const Eigen::ArrayXXd wa = ga.block(y, x, kWindow, kWindow);
      const Eigen::ArrayXXd wb = gb.block(y, x, kWindow, kWindow);
      const double ma = wa.mean();
      const double mb = wb.mean();
      const double va = (wa - ma).square().mean();
      const double vb = (wb - mb).square().mean();
      const double cov = ((wa - ma) * (wb - mb)).mean();
      total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      ++windows;
    }
  return total / windows;
}

void MetricReport::add(std::string id, const ImageTensor& restored, const ImageTensor& reference) {
  add({std::move(id), psnr(restored, reference), ssim(restored, reference)});
}

void MetricReport::add(ImageScore score) {
  images.push_back(std::move(score));
  double ps = 0.0;
  double ss = 0.0;
  int finite = 0;
  for (const auto& s : images) {
    if (std::isfinite(s.psnr)) {
      ps += s.psnr;
      ++finite;
    }
    ss += s.ssim;
  }
  mean_psnr = finite ? ps / finite : std::numeric_limits<double>::infinity();
  mean_ssim = ss / static_cast<double>(images.size());
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, path.string());
  out << "image_id,psnr,ssim\n";
  out.precision(10);
  for (const auto& s : images) out << s.id << "," << s.psnr << "," << s.ssim << "\n";
}

nlohmann::json MetricReport::aggregate_json() const {
  nlohmann::json j = {{"count", images.size()}, {"mean_ssim", mean_ssim}};
  // JSON has no infinity; identical-image PSNR is reported as null.
  j["mean_psnr"] = std::isfinite(mean_psnr) ? nlohmann::json(mean_psnr) : nlohmann::json(nullptr);
  return j;
}

}  // namespace iddm
