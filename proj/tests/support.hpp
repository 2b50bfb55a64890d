#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "iddm/image.hpp"

namespace iddm::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("iddm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename Scalar = float>
Image<Scalar> random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Image<Scalar> img(h, w, c);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data[i] = static_cast<Scalar>(u(rng));
  return img;
}

template <typename Scalar = float>
Depth<Scalar> random_depth(int h, int w, std::uint64_t seed, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, hi);
  Depth<Scalar> d(h, w);
  for (Eigen::Index i = 0; i < d.data.size(); ++i) d.data[i] = static_cast<Scalar>(u(rng));
  return d;
}

template <typename Scalar>
double max_abs_diff(const Image<Scalar>& a, const Image<Scalar>& b) {
  return (a.data.template cast<double>() - b.data.template cast<double>()).abs().maxCoeff();
}

}  // namespace iddm::test
