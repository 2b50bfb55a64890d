// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Denoiser eps_theta(x_t, h_t, x^, t) and haze estimator (HtNet), both small
// U-Nets: 3x3 convolutions, SiLU, stride-2 downsampling, nearest upsampling
// and skip connections by concatenation. A sinusoidal time embedding is
// projected and added after the first convolution.

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iddm/autodiff.hpp"
#include "iddm/image.hpp"

namespace iddm {

enum class NetKind { kDenoiser, kHazeEstimator };

/// Which tensors HtNet consumes.
enum class HtnetInputs {
  kHazy,          // x^ only (3 channels)
  kState,         // x_t only (3 channels)
  kStateAndHazy,  // x_t and x^ (6 channels)
};

const char* to_string(HtnetInputs inputs);
HtnetInputs htnet_inputs_from_string(const std::string& name);

struct Architecture {
  NetKind kind = NetKind::kDenoiser;
  int levels = 2;
  int base_width = 16;
  int time_dim = 32;
  HtnetInputs htnet_inputs = HtnetInputs::kHazy;

  int input_channels() const;
  int output_channels() const { return 3; }
  int width_at(int level) const { return base_width << level; }
  void validate() const;

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
  bool operator==(const Architecture&) const = default;
};

Architecture denoiser_architecture(int base_width = 16, int levels = 2);
Architecture htnet_architecture(HtnetInputs inputs = HtnetInputs::kHazy, int base_width = 16, int levels = 2);

/// Sinusoidal features [sin(t f_k), cos(t f_k)] with f_k = 10000^(-k / (dim/2)).
Eigen::VectorXd time_embedding(int t, int dim);

template <typename Scalar>
struct RecordedPass;

template <typename Scalar>
struct ModelParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Architecture arch;
  std::map<std::string, Mat> values;
  std::map<std::string, Mat> grads;
  std::map<std::string, Mat> adam_m;
  std::map<std::string, Mat> adam_v;
  std::int64_t adam_steps = 0;
  bool grads_ready = false;
  /// Set by a recording forward pass, cleared by backward().
  std::shared_ptr<RecordedPass<Scalar>> trace;

  std::size_t parameter_count() const;
  bool all_finite() const;

  template <typename Other>
  ModelParams<Other> cast() const;
};

/// Parameter tensor shapes keyed by name, in a fixed order.
std::map<std::string, std::pair<int, int>> parameter_shapes(const Architecture& arch);

/// Kernels ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero. Deterministic in seed.
template <typename Scalar>
ModelParams<Scalar> init_params(const Architecture& arch, std::uint64_t seed);

struct ForwardOptions {
  bool record = false;       // keep the trace for backward()
  bool param_grads = true;   // only meaningful when recording
  bool input_grads = false;  // only meaningful when recording
};

/// Batched denoiser pass; all spans have the batch length, images share one shape.
template <typename Scalar>
std::vector<Image<Scalar>> denoiser_forward(ModelParams<Scalar>& p, std::span<const Image<Scalar>> x_t,
                                            std::span<const Image<Scalar>> h_t, std::span<const Image<Scalar>> hazy,
                                            std::span<const int> t, ForwardOptions opts = {});

/// Batched HtNet pass. Output is non-negative (softplus).
template <typename Scalar>
std::vector<Image<Scalar>> htnet_forward(ModelParams<Scalar>& p, std::span<const Image<Scalar>> x_t,
                                         std::span<const Image<Scalar>> hazy, std::span<const int> t,
                                         ForwardOptions opts = {});

/// Non-recording passes on shared parameters; safe to call concurrently.
template <typename Scalar>
Image<Scalar> denoiser_predict(const ModelParams<Scalar>& p, const Image<Scalar>& x_t, const Image<Scalar>& h_t,
                               const Image<Scalar>& hazy, int t);
template <typename Scalar>
Image<Scalar> htnet_predict(const ModelParams<Scalar>& p, const Image<Scalar>& x_t, const Image<Scalar>& hazy, int t);

/// Gradient w.r.t. the network's concatenated input, split per input tensor.
template <typename Scalar>
struct InputGradients {
  /// One entry per input tensor (e.g. x_t, h_t, x^ for the denoiser), each batch-long.
  std::vector<std::vector<Image<Scalar>>> per_input;
};

/// Reverse pass over the trace recorded by the last forward. Overwrites the
/// gradient buffers when the pass recorded parameter gradients. Consumes the trace.
template <typename Scalar>
InputGradients<Scalar> backward(ModelParams<Scalar>& p, std::span<const Image<Scalar>> loss_gradient);

/// Bias-corrected Adam step; moments persist in `p`.
template <typename Scalar>
void adam_update(ModelParams<Scalar>& p, double lr, double beta1, double beta2, std::int64_t step,
                 double epsilon = 1e-8);

}  // namespace iddm
