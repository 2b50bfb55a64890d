// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Minimal reverse-mode differentiation over feature maps.
//
// Every value is a matrix with one row per channel and one column per pixel;
// a batch of N maps of size H x W has N*H*W columns ordered (n, y, x).
// Non-spatial values (time embeddings, scalars) use H = W = 1.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iddm/error.hpp"

namespace iddm::ad {

struct Shape {
  int batch = 1;
  int height = 1;
  int width = 1;

  Eigen::Index pixels() const { return Eigen::Index(height) * width; }
  Eigen::Index cols() const { return Eigen::Index(batch) * height * width; }
  bool operator==(const Shape&) const = default;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  // Reverse closures hold `this`, so a tape stays where it was built.
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Mat value, Shape shape, bool requires_grad) {
    IDDM_CHECK(value.cols() == shape.cols(), ErrorCode::kShapeMismatch, "leaf columns do not match its shape");
    return push(std::move(value), shape, requires_grad, nullptr);
  }

  const Mat& value(Var v) const { return node(v).value; }
  Shape shape(Var v) const { return node(v).shape; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient of the seeded output w.r.t. `v`; zeros if nothing reached it.
  Mat grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // ---- operations ---------------------------------------------------------

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Mat out = value(a) + value(b);
    return push(std::move(out), shape(a), any_grad(a, b), [this, a, b](const Mat& g) {
      accumulate(a, g);
      accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Mat out = value(a) - value(b);
    return push(std::move(out), shape(a), any_grad(a, b), [this, a, b](const Mat& g) {
      accumulate(a, g);
      accumulate(b, -g);
    });
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Mat out = value(a).cwiseProduct(value(b));
    return push(std::move(out), shape(a), any_grad(a, b), [this, a, b](const Mat& g) {
      accumulate(a, g.cwiseProduct(value(b)));
      accumulate(b, g.cwiseProduct(value(a)));
    });
  }

  Var scale(Var a, Scalar k) {
    Mat out = value(a) * k;
    return push(std::move(out), shape(a), requires_grad(a), [this, a, k](const Mat& g) { accumulate(a, g * k); });
  }

  /// Sum of all entries as a 1x1 value.
  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), Shape{}, requires_grad(a), [this, a](const Mat& g) {
      accumulate(a, Mat::Constant(value(a).rows(), value(a).cols(), g(0, 0)));
    });
  }

  Var silu(Var a) {
    const Mat& x = value(a);
    Mat sig = (Scalar(1) + (-x.array()).exp()).inverse().matrix();
    Mat out = x.cwiseProduct(sig);
    auto s = std::make_shared<Mat>(std::move(sig));
    return push(std::move(out), shape(a), requires_grad(a), [this, a, s](const Mat& g) {
      const auto& x = value(a).array();
      const auto& sg = s->array();
      accumulate(a, (g.array() * (sg + x * sg * (Scalar(1) - sg))).matrix());
    });
  }

  Var softplus(Var a) {
    const auto x = value(a).array();
    Mat out = (x.max(Scalar(0)) + (-x.abs()).exp().log1p()).matrix();
    return push(std::move(out), shape(a), requires_grad(a), [this, a](const Mat& g) {
      const auto x = value(a).array();
      accumulate(a, (g.array() * (Scalar(1) + (-x).exp()).inverse()).matrix());
    });
  }

  /// Channel-wise concatenation: rows of `a` then rows of `b`.
  Var concat(Var a, Var b) {
    IDDM_CHECK(shape(a) == shape(b), ErrorCode::kShapeMismatch, "concat: spatial shapes differ");
    const Eigen::Index ra = value(a).rows();
    Mat out(ra + value(b).rows(), value(a).cols());
    out.topRows(ra) = value(a);
    out.bottomRows(value(b).rows()) = value(b);
    return push(std::move(out), shape(a), any_grad(a, b), [this, a, b, ra](const Mat& g) {
      accumulate(a, g.topRows(ra));
      accumulate(b, g.bottomRows(g.rows() - ra));
    });
  }

  /// Nearest-neighbour resize to (height, width).
  Var upsample_nearest(Var a, int height, int width) {
    const Shape in = shape(a);
    const Shape os{in.batch, height, width};
    std::vector<Eigen::Index> src(static_cast<std::size_t>(os.cols()));
    for (int n = 0; n < os.batch; ++n)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const int sy = static_cast<int>(std::int64_t(y) * in.height / height);
          const int sx = static_cast<int>(std::int64_t(x) * in.width / width);
          src[static_cast<std::size_t>((Eigen::Index(n) * height + y) * width + x)] =
              (Eigen::Index(n) * in.height + sy) * in.width + sx;
        }
    const Mat& xv = value(a);
    Mat out(xv.rows(), os.cols());
    for (Eigen::Index c = 0; c < os.cols(); ++c) out.col(c) = xv.col(src[static_cast<std::size_t>(c)]);
    auto map = std::make_shared<std::vector<Eigen::Index>>(std::move(src));
    return push(std::move(out), os, requires_grad(a), [this, a, map](const Mat& g) {
      Mat dx = Mat::Zero(value(a).rows(), value(a).cols());
      for (Eigen::Index c = 0; c < g.cols(); ++c) dx.col((*map)[static_cast<std::size_t>(c)]) += g.col(c);
      accumulate(a, dx);
    });
  }

  /// y = W x + b with x of shape D x cols, W of shape out x D, b of shape out x 1.
  Var linear(Var x, Var weight, Var bias) {
    const Mat& w = value(weight);
    IDDM_CHECK(w.cols() == value(x).rows() && value(bias).rows() == w.rows() && value(bias).cols() == 1,
               ErrorCode::kShapeMismatch, "linear: weight/bias/input mismatch");
    Mat out = w * value(x);
    out.colwise() += value(bias).col(0);
    return push(std::move(out), shape(x), any_grad(x, weight, bias), [this, x, weight, bias](const Mat& g) {
      if (requires_grad(weight)) accumulate(weight, g * value(x).transpose());
      if (requires_grad(bias)) accumulate(bias, g.rowwise().sum());
      if (requires_grad(x)) accumulate(x, value(weight).transpose() * g);
    });
  }

  /// Adds per-sample vectors `e` (C x batch) to every pixel of the matching sample of `x`.
  Var add_per_sample(Var x, Var e) {
    const Shape s = shape(x);
    IDDM_CHECK(value(e).rows() == value(x).rows() && value(e).cols() == s.batch, ErrorCode::kShapeMismatch,
               "add_per_sample: embedding must be channels x batch");
    Mat out = value(x);
    const Eigen::Index p = s.pixels();
    for (int n = 0; n < s.batch; ++n) out.middleCols(n * p, p).colwise() += value(e).col(n);
    return push(std::move(out), s, any_grad(x, e), [this, x, e, p](const Mat& g) {
      accumulate(x, g);
      if (requires_grad(e)) {
        Mat de(g.rows(), shape(x).batch);
        for (int n = 0; n < shape(x).batch; ++n) de.col(n) = g.middleCols(n * p, p).rowwise().sum();
        accumulate(e, de);
      }
    });
  }

  /// Multiplies every pixel of each sample of `x` by (1 + e), with `e` C x batch.
  Var scale_per_sample(Var x, Var e) {
    const Shape s = shape(x);
    IDDM_CHECK(value(e).rows() == value(x).rows() && value(e).cols() == s.batch, ErrorCode::kShapeMismatch,
               "scale_per_sample: embedding must be channels x batch");
    Mat out = value(x);
    const Eigen::Index p = s.pixels();
    for (int n = 0; n < s.batch; ++n)
      out.middleCols(n * p, p).array().colwise() *= value(e).col(n).array() + Scalar(1);
    return push(std::move(out), s, any_grad(x, e), [this, x, e, p](const Mat& g) {
      const int batch = shape(x).batch;
      if (requires_grad(x)) {
        Mat dx = g;
        for (int n = 0; n < batch; ++n) dx.middleCols(n * p, p).array().colwise() *= value(e).col(n).array() + Scalar(1);
        accumulate(x, dx);
      }
      if (requires_grad(e)) {
        Mat de(g.rows(), batch);
        for (int n = 0; n < batch; ++n)
          de.col(n) = g.middleCols(n * p, p).cwiseProduct(value(x).middleCols(n * p, p)).rowwise().sum();
        accumulate(e, de);
      }
    });
  }

  /// 3x3 convolution with zero padding 1. `weight` is Cout x (9 * Cin) with
  /// column index (ky * 3 + kx) * Cin + ci; `bias` is Cout x 1.
  Var conv3x3(Var x, Var weight, Var bias, int stride) {
    const Shape in = shape(x);
    const Eigen::Index cin = value(x).rows();
    const Mat& w = value(weight);
    IDDM_CHECK(stride == 1 || stride == 2, ErrorCode::kInvalidArgument, "conv3x3 stride must be 1 or 2");
    IDDM_CHECK(w.cols() == 9 * cin && value(bias).rows() == w.rows(), ErrorCode::kShapeMismatch,
               "conv3x3: weight has " + std::to_string(w.cols()) + " columns, input has " +
                   std::to_string(cin) + " channels");
    const Shape os{in.batch, (in.height - 1) / stride + 1, (in.width - 1) / stride + 1};

    auto cols = std::make_shared<Mat>(9 * cin, os.cols());
    im2col(value(x), in, os, stride, *cols);
    Mat out = w * (*cols);
    out.colwise() += value(bias).col(0);
    return push(std::move(out), os, any_grad(x, weight, bias), [this, x, weight, bias, cols, in, os, stride](const Mat& g) {
      if (requires_grad(weight)) accumulate(weight, g * cols->transpose());
      if (requires_grad(bias)) accumulate(bias, g.rowwise().sum());
      if (requires_grad(x)) {
        const Mat dcols = value(weight).transpose() * g;
        Mat dx = Mat::Zero(value(x).rows(), value(x).cols());
        col2im(dcols, in, os, stride, dx);
        accumulate(x, dx);
      }
    });
  }

  // ---- reverse pass ---------------------------------------------------------

  /// Seeds d(out) = `seed` and propagates to every node that requires a gradient.
  /// A tape supports exactly one reverse pass.
  void backward(Var out, const Mat& seed) {
    IDDM_CHECK(!consumed_, ErrorCode::kNoTrace, "backward already ran on this trace");
    const Node& o = node(out);
    IDDM_CHECK(seed.rows() == o.value.rows() && seed.cols() == o.value.cols(), ErrorCode::kShapeMismatch,
               "backward seed shape does not match output");
    consumed_ = true;
    accumulate(out, seed);
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.grad.size() != 0) {
        n.back(n.grad);  // only touches earlier nodes
      }
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Shape shape;
    bool requires_grad = false;
    std::function<void(const Mat&)> back;
  };

  const Node& node(Var v) const {
    IDDM_CHECK(v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size(), ErrorCode::kInvalidArgument,
               "variable does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  template <typename... Vars>
  bool any_grad(Vars... vs) const {
    return (requires_grad(vs) || ...);
  }

  void check_same(Var a, Var b, const char* op) const {
    IDDM_CHECK(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), ErrorCode::kShapeMismatch,
               std::string(op) + ": operand shapes differ");
  }

  Var push(Mat value, Shape shape, bool requires_grad, std::function<void(const Mat&)> back) {
    Node n;
    n.value = std::move(value);
    n.shape = shape;
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  static void im2col(const Mat& x, Shape in, Shape os, int stride, Mat& cols) {
    const Eigen::Index cin = x.rows();
    for (int n = 0; n < in.batch; ++n)
      for (int oy = 0; oy < os.height; ++oy)
        for (int ox = 0; ox < os.width; ++ox) {
          const Eigen::Index c = (Eigen::Index(n) * os.height + oy) * os.width + ox;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * stride + ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * stride + kx - 1;
              auto dst = cols.block((ky * 3 + kx) * cin, c, cin, 1);
              if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width)
                dst.setZero();
              else
                dst = x.col((Eigen::Index(n) * in.height + iy) * in.width + ix);
            }
          }
        }
  }

  static void col2im(const Mat& cols, Shape in, Shape os, int stride, Mat& dx) {
    const Eigen::Index cin = dx.rows();
    for (int n = 0; n < in.batch; ++n)
      for (int oy = 0; oy < os.height; ++oy)
        for (int ox = 0; ox < os.width; ++ox) {
          const Eigen::Index c = (Eigen::Index(n) * os.height + oy) * os.width + ox;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * stride + kx - 1;
              if (ix < 0 || ix >= in.width) continue;
              dx.col((Eigen::Index(n) * in.height + iy) * in.width + ix) += cols.block((ky * 3 + kx) * cin, c, cin, 1);
            }
          }
        }
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace iddm::ad
