// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cassert>
#include <string>

#include "iddm/error.hpp"

namespace iddm {

/// H x W x C raster stored row-major with interleaved channels, i.e. the value
/// at (y, x, c) lives at `data[(y * width + x) * channels + c]`.
///
/// Clear and hazy images live in [0,1]; haze maps and noise tensors share the
/// same type but are not range-restricted.
template <typename Scalar>
struct Image {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  /// Channels x pixels view; column p is pixel p's channel vector.
  using PixelMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>>;
  using ConstPixelMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>>;

  int height = 0;
  int width = 0;
  int channels = 0;
  Array data;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), data(Array::Zero(Eigen::Index(h) * w * c)) {}

  static Image zeros(int h, int w, int c) { return Image(h, w, c); }
  static Image constant(int h, int w, int c, Scalar v) {
    Image img(h, w, c);
    img.data.setConstant(v);
    return img;
  }

  Eigen::Index size() const { return data.size(); }
  int pixels() const { return height * width; }
  bool empty() const { return data.size() == 0; }

  Scalar& operator()(int y, int x, int c) { return data[(Eigen::Index(y) * width + x) * channels + c]; }
  Scalar operator()(int y, int x, int c) const { return data[(Eigen::Index(y) * width + x) * channels + c]; }

  PixelMap by_pixel() { return PixelMap(data.data(), channels, pixels()); }
  ConstPixelMap by_pixel() const { return ConstPixelMap(data.data(), channels, pixels()); }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.height = height;
    out.width = width;
    out.channels = channels;
    out.data = data.template cast<Other>();
    return out;
  }

  bool operator==(const Image& o) const { return same_shape(o) && (data == o.data).all(); }
};

/// Non-negative scene depth Z(x, y), row-major.
template <typename Scalar>
struct Depth {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  int height = 0;
  int width = 0;
  Array data;

  Depth() = default;
  Depth(int h, int w) : height(h), width(w), data(Array::Zero(Eigen::Index(h) * w)) {}

  static Depth constant(int h, int w, Scalar v) {
    Depth d(h, w);
    d.data.setConstant(v);
    return d;
  }

  Scalar& operator()(int y, int x) { return data[Eigen::Index(y) * width + x]; }
  Scalar operator()(int y, int x) const { return data[Eigen::Index(y) * width + x]; }

  template <typename Other>
  Depth<Other> cast() const {
    Depth<Other> out;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }

  bool operator==(const Depth& o) const {
    return height == o.height && width == o.width && (data == o.data).all();
  }
};

using ImageTensor = Image<float>;
using DepthMap = Depth<float>;

template <typename Scalar>
void require_same_shape(const Image<Scalar>& a, const Image<Scalar>& b, const char* what) {
  IDDM_CHECK(a.same_shape(b), ErrorCode::kShapeMismatch,
             std::string(what) + ": " + std::to_string(a.height) + "x" + std::to_string(a.width) + "x" +
                 std::to_string(a.channels) + " vs " + std::to_string(b.height) + "x" +
                 std::to_string(b.width) + "x" + std::to_string(b.channels));
}

template <typename Scalar>
Image<Scalar> clamp01(Image<Scalar> img) {
  img.data = img.data.max(Scalar(0)).min(Scalar(1));
  return img;
}

}  // namespace iddm
