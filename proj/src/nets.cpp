// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/nets.hpp"

#include <cmath>
#include <random>

namespace iddm {

const char* to_string(HtnetInputs inputs) {
  switch (inputs) {
    case HtnetInputs::kHazy: return "hazy";
    case HtnetInputs::kState: return "state";
    case HtnetInputs::kStateAndHazy: return "state_and_hazy";
  }
  return "hazy";
}

HtnetInputs htnet_inputs_from_string(const std::string& name) {
  if (name == "hazy") return HtnetInputs::kHazy;
  if (name == "state") return HtnetInputs::kState;
  if (name == "state_and_hazy") return HtnetInputs::kStateAndHazy;
  throw Error(ErrorCode::kInvalidArgument, "unknown htnet_inputs '" + name + "'");
}

int Architecture::input_channels() const {
  if (kind == NetKind::kDenoiser) return 9;
  return htnet_inputs == HtnetInputs::kStateAndHazy ? 6 : 3;
}

void Architecture::validate() const {
  IDDM_CHECK(levels >= 1 && levels <= 5, ErrorCode::kInvalidArgument, "levels must be in [1, 5]");
  IDDM_CHECK(base_width >= 1, ErrorCode::kInvalidArgument, "zero-sized layers: base_width must be >= 1");
  IDDM_CHECK(time_dim >= 2 && time_dim % 2 == 0, ErrorCode::kInvalidArgument, "time_dim must be even and >= 2");
}

nlohmann::json Architecture::to_json() const {
  return {{"kind", kind == NetKind::kDenoiser ? "denoiser" : "htnet"},
          {"levels", levels},
          {"base_width", base_width},
          {"time_dim", time_dim},
          {"input_channels", input_channels()},
          {"htnet_inputs", to_string(htnet_inputs)}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  Architecture a;
  const std::string kind = j.at("kind").get<std::string>();
  IDDM_CHECK(kind == "denoiser" || kind == "htnet", ErrorCode::kArchitectureMismatch, "unknown network kind " + kind);
  a.kind = kind == "denoiser" ? NetKind::kDenoiser : NetKind::kHazeEstimator;
  a.levels = j.at("levels").get<int>();
  a.base_width = j.at("base_width").get<int>();
  a.time_dim = j.at("time_dim").get<int>();
  a.htnet_inputs = htnet_inputs_from_string(j.value("htnet_inputs", std::string("hazy")));
  a.validate();
  return a;
}

Architecture denoiser_architecture(int base_width, int levels) {
  Architecture a;
  a.kind = NetKind::kDenoiser;
  a.base_width = base_width;
  a.levels = levels;
  return a;
}

Architecture htnet_architecture(HtnetInputs inputs, int base_width, int levels) {
  Architecture a;
  a.kind = NetKind::kHazeEstimator;
  a.htnet_inputs = inputs;
  a.base_width = base_width;
  a.levels = levels;
  return a;
}

Eigen::VectorXd time_embedding(int t, int dim) {
  IDDM_CHECK(dim >= 2 && dim % 2 == 0, ErrorCode::kInvalidArgument, "embedding dimension must be even");
  const int half = dim / 2;
  Eigen::VectorXd e(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e[k] = std::sin(t * freq);
    e[half + k] = std::cos(t * freq);
  }
  return e;
}

std::map<std::string, std::pair<int, int>> parameter_shapes(const Architecture& arch) {
  arch.validate();
  std::map<std::string, std::pair<int, int>> s;
  auto conv = [&s](const std::string& name, int cin, int cout) {
    s[name + ".weight"] = {cout, 9 * cin};
    s[name + ".bias"] = {cout, 1};
  };
  const int b = arch.base_width;
  const int top = arch.levels - 1;
  conv("in", arch.input_channels(), b);
  s["time.weight"] = {b, arch.time_dim};
  s["time.bias"] = {b, 1};
  s["time_scale.weight"] = {b, arch.time_dim};
  s["time_scale.bias"] = {b, 1};
  for (int l = 0; l <= top; ++l) {
    conv("enc" + std::to_string(l), arch.width_at(l), arch.width_at(l));
    if (l < top) conv("down" + std::to_string(l), arch.width_at(l), arch.width_at(l + 1));
  }
  conv("mid", arch.width_at(top), arch.width_at(top));
  for (int l = top - 1; l >= 0; --l) {
    conv("dec" + std::to_string(l), arch.width_at(l + 1) + arch.width_at(l), arch.width_at(l));
    conv("res" + std::to_string(l), arch.width_at(l), arch.width_at(l));
  }
  conv("out", b, arch.output_channels());
  return s;
}

template <typename Scalar>
std::size_t ModelParams<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : values) n += static_cast<std::size_t>(v.size());
  return n;
}

template <typename Scalar>
bool ModelParams<Scalar>::all_finite() const {
  for (const auto& [name, v] : values)
    if (!v.allFinite()) return false;
  return true;
}

template <typename Scalar>
template <typename Other>
ModelParams<Other> ModelParams<Scalar>::cast() const {
  ModelParams<Other> out;
  out.arch = arch;
  for (const auto& [name, v] : values) out.values[name] = v.template cast<Other>();
  return out;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams<Scalar> p;
  p.arch = arch;
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : parameter_shapes(arch)) {
    const auto [rows, cols] = shape;
    IDDM_CHECK(rows > 0 && cols > 0, ErrorCode::kInvalidArgument, "zero-sized layer " + name);
    typename ModelParams<Scalar>::Mat m = ModelParams<Scalar>::Mat::Zero(rows, cols);
    if (name.ends_with(".weight")) {
      const double bound = std::sqrt(3.0 / cols);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(u(rng));
    }
    p.values[name] = std::move(m);
  }
  return p;
}

template <typename Scalar>
struct RecordedPass {
  std::unique_ptr<ad::Tape<Scalar>> tape;
  ad::Var input;
  ad::Var output;
  std::map<std::string, ad::Var> params;
  std::vector<int> input_channels;
  ad::Shape shape;
  bool param_grads = false;
};

namespace {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Inputs = std::vector<std::span<const Image<Scalar>>>;

template <typename Scalar>
Mat<Scalar> pack(const Inputs<Scalar>& inputs, std::span<const int> t, ad::Shape& shape, std::vector<int>& channels) {
  IDDM_CHECK(!inputs.empty() && !inputs.front().empty(), ErrorCode::kInvalidArgument, "empty network batch");
  const Image<Scalar>& ref = inputs.front().front();
  shape = ad::Shape{static_cast<int>(inputs.front().size()), ref.height, ref.width};
  IDDM_CHECK(t.size() == inputs.front().size(), ErrorCode::kShapeMismatch, "one timestep per batch element needed");
  channels.clear();
  int total = 0;
  for (const auto& in : inputs) {
    IDDM_CHECK(in.size() == inputs.front().size(), ErrorCode::kShapeMismatch, "inputs differ in batch size");
    channels.push_back(in.front().channels);
    total += in.front().channels;
  }
  Mat<Scalar> m(total, shape.cols());
  const Eigen::Index pix = shape.pixels();
  int row = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (int n = 0; n < shape.batch; ++n) {
      const Image<Scalar>& img = inputs[k][static_cast<std::size_t>(n)];
      IDDM_CHECK(img.height == ref.height && img.width == ref.width && img.channels == channels[k],
                 ErrorCode::kShapeMismatch, "network inputs must share one spatial shape");
      m.block(row, n * pix, channels[k], pix) = img.by_pixel().matrix();
    }
    row += channels[k];
  }
  return m;
}

template <typename Scalar>
std::vector<Image<Scalar>> unpack(const Mat<Scalar>& m, int row, int channels, ad::Shape shape) {
  std::vector<Image<Scalar>> out;
  const Eigen::Index pix = shape.pixels();
  for (int n = 0; n < shape.batch; ++n) {
    Image<Scalar> img(shape.height, shape.width, channels);
    img.by_pixel() = m.block(row, n * pix, channels, pix).array();
    out.push_back(std::move(img));
  }
  return out;
}

template <typename Scalar>
std::shared_ptr<RecordedPass<Scalar>> run(const ModelParams<Scalar>& p, const Inputs<Scalar>& inputs,
                                          std::span<const int> t, bool param_grads, bool input_grads) {
  const Architecture& arch = p.arch;
  auto pass = std::make_shared<RecordedPass<Scalar>>();
  pass->tape = std::make_unique<ad::Tape<Scalar>>();
  pass->param_grads = param_grads;
  ad::Tape<Scalar>& tape = *pass->tape;

  Mat<Scalar> packed = pack(inputs, t, pass->shape, pass->input_channels);
  IDDM_CHECK(packed.rows() == arch.input_channels(), ErrorCode::kArchitectureMismatch,
             "network expects " + std::to_string(arch.input_channels()) + " input channels, got " +
                 std::to_string(packed.rows()));
  pass->input = tape.leaf(std::move(packed), pass->shape, input_grads);

  for (const auto& [name, v] : p.values) pass->params[name] = tape.leaf(v, ad::Shape{1, 1, int(v.cols())}, param_grads);
  auto param = [&](const std::string& name) {
    auto it = pass->params.find(name);
    IDDM_CHECK(it != pass->params.end(), ErrorCode::kArchitectureMismatch, "missing parameter " + name);
    return it->second;
  };
  auto conv = [&](ad::Var x, const std::string& name, int stride = 1) {
    return tape.conv3x3(x, param(name + ".weight"), param(name + ".bias"), stride);
  };

  Mat<Scalar> emb(arch.time_dim, pass->shape.batch);
  for (int n = 0; n < pass->shape.batch; ++n)
    emb.col(n) = time_embedding(t[static_cast<std::size_t>(n)], arch.time_dim).template cast<Scalar>();
  const ad::Var temb = tape.leaf(std::move(emb), ad::Shape{pass->shape.batch, 1, 1}, false);
  const ad::Var tproj = tape.linear(temb, param("time.weight"), param("time.bias"));
  const ad::Var tscale = tape.linear(temb, param("time_scale.weight"), param("time_scale.bias"));

  // Pre-activation residual blocks; the convolutions between blocks are linear,
  // so the network contains a purely linear path from input to output.
  auto residual = [&](ad::Var x, const std::string& name) { return tape.add(x, conv(tape.silu(x), name)); };
  ad::Var h = tape.add_per_sample(tape.scale_per_sample(conv(pass->input, "in"), tscale), tproj);
  std::vector<ad::Var> skips;
  const int top = arch.levels - 1;
  for (int l = 0; l <= top; ++l) {
    h = residual(h, "enc" + std::to_string(l));
    if (l < top) {
      skips.push_back(h);
      h = conv(h, "down" + std::to_string(l), 2);
    }
  }
  h = residual(h, "mid");
  for (int l = top - 1; l >= 0; --l) {
    const ad::Var skip = skips[static_cast<std::size_t>(l)];
    const ad::Shape ss = tape.shape(skip);
    h = tape.concat(tape.upsample_nearest(h, ss.height, ss.width), skip);
    h = residual(conv(h, "dec" + std::to_string(l)), "res" + std::to_string(l));
  }
  h = conv(h, "out");
  if (arch.kind == NetKind::kHazeEstimator) h = tape.softplus(h);
  pass->output = h;
  return pass;
}

template <typename Scalar>
std::vector<Image<Scalar>> finish(ModelParams<Scalar>& p, std::shared_ptr<RecordedPass<Scalar>> pass,
                                  ForwardOptions opts) {
  auto out = unpack(pass->tape->value(pass->output), 0, p.arch.output_channels(), pass->shape);
  p.trace = opts.record ? std::move(pass) : nullptr;
  return out;
}

template <typename Scalar>
Inputs<Scalar> htnet_inputs(const Architecture& arch, std::span<const Image<Scalar>> x_t,
                            std::span<const Image<Scalar>> hazy) {
  switch (arch.htnet_inputs) {
    case HtnetInputs::kHazy: return {hazy};
    case HtnetInputs::kState: return {x_t};
    case HtnetInputs::kStateAndHazy: return {x_t, hazy};
  }
  return {hazy};
}

}  // namespace

template <typename Scalar>
std::vector<Image<Scalar>> denoiser_forward(ModelParams<Scalar>& p, std::span<const Image<Scalar>> x_t,
                                            std::span<const Image<Scalar>> h_t, std::span<const Image<Scalar>> hazy,
                                            std::span<const int> t, ForwardOptions opts) {
  IDDM_CHECK(p.arch.kind == NetKind::kDenoiser, ErrorCode::kArchitectureMismatch, "not a denoiser");
  auto pass = run(p, Inputs<Scalar>{x_t, h_t, hazy}, t, opts.record && opts.param_grads,
                  opts.record && opts.input_grads);
  return finish(p, std::move(pass), opts);
}

template <typename Scalar>
std::vector<Image<Scalar>> htnet_forward(ModelParams<Scalar>& p, std::span<const Image<Scalar>> x_t,
                                         std::span<const Image<Scalar>> hazy, std::span<const int> t,
                                         ForwardOptions opts) {
  IDDM_CHECK(p.arch.kind == NetKind::kHazeEstimator, ErrorCode::kArchitectureMismatch, "not a haze estimator");
  IDDM_CHECK(x_t.size() == hazy.size(), ErrorCode::kShapeMismatch, "x_t and hazy batches differ");
  for (std::size_t i = 0; i < x_t.size(); ++i) require_same_shape(x_t[i], hazy[i], "htnet_forward");
  auto pass = run(p, htnet_inputs(p.arch, x_t, hazy), t, opts.record && opts.param_grads,
                  opts.record && opts.input_grads);
  return finish(p, std::move(pass), opts);
}

template <typename Scalar>
Image<Scalar> denoiser_predict(const ModelParams<Scalar>& p, const Image<Scalar>& x_t, const Image<Scalar>& h_t,
                               const Image<Scalar>& hazy, int t) {
  IDDM_CHECK(p.arch.kind == NetKind::kDenoiser, ErrorCode::kArchitectureMismatch, "not a denoiser");
  require_same_shape(x_t, h_t, "denoiser(x_t, h_t)");
  require_same_shape(x_t, hazy, "denoiser(x_t, hazy)");
  const int ts[1] = {t};
  auto pass = run(p, Inputs<Scalar>{{&x_t, 1}, {&h_t, 1}, {&hazy, 1}}, ts, false, false);
  return unpack(pass->tape->value(pass->output), 0, 3, pass->shape).front();
}

template <typename Scalar>
Image<Scalar> htnet_predict(const ModelParams<Scalar>& p, const Image<Scalar>& x_t, const Image<Scalar>& hazy, int t) {
  IDDM_CHECK(p.arch.kind == NetKind::kHazeEstimator, ErrorCode::kArchitectureMismatch, "not a haze estimator");
  require_same_shape(x_t, hazy, "htnet(x_t, hazy)");
  const int ts[1] = {t};
  auto pass = run(p, htnet_inputs<Scalar>(p.arch, {&x_t, 1}, {&hazy, 1}), ts, false, false);
  return unpack(pass->tape->value(pass->output), 0, 3, pass->shape).front();
}

template <typename Scalar>
InputGradients<Scalar> backward(ModelParams<Scalar>& p, std::span<const Image<Scalar>> loss_gradient) {
  IDDM_CHECK(p.trace != nullptr, ErrorCode::kNoTrace, "backward() needs a recording forward pass first");
  auto pass = std::move(p.trace);
  p.trace = nullptr;
  ad::Tape<Scalar>& tape = *pass->tape;

  std::vector<int> out_channels{p.arch.output_channels()};
  ad::Shape seed_shape;
  Mat<Scalar> seed = pack(Inputs<Scalar>{loss_gradient}, std::vector<int>(loss_gradient.size(), 0), seed_shape,
                          out_channels);
  IDDM_CHECK(seed_shape == pass->shape && seed.rows() == p.arch.output_channels(), ErrorCode::kShapeMismatch,
             "loss gradient does not match the recorded output");
  tape.backward(pass->output, seed);

  if (pass->param_grads) {
    for (const auto& [name, var] : pass->params) p.grads[name] = tape.grad(var);
    p.grads_ready = true;
  }

  InputGradients<Scalar> g;
  if (tape.requires_grad(pass->input)) {
    const Mat<Scalar> din = tape.grad(pass->input);
    int row = 0;
    for (int c : pass->input_channels) {
      g.per_input.push_back(unpack(din, row, c, pass->shape));
      row += c;
    }
  }
  return g;
}

template <typename Scalar>
void adam_update(ModelParams<Scalar>& p, double lr, double beta1, double beta2, std::int64_t step, double epsilon) {
  IDDM_CHECK(p.grads_ready, ErrorCode::kNotInitialized, "adam_update before any gradient was computed");
  IDDM_CHECK(step >= 1, ErrorCode::kInvalidArgument, "Adam step counter starts at 1");
  const double c1 = 1.0 - std::pow(beta1, double(step));
  const double c2 = 1.0 - std::pow(beta2, double(step));
  for (auto& [name, value] : p.values) {
    const auto& g = p.grads.at(name).array();
    auto& m = p.adam_m[name];
    auto& v = p.adam_v[name];
    if (m.size() == 0) m = Mat<Scalar>::Zero(value.rows(), value.cols());
    if (v.size() == 0) v = Mat<Scalar>::Zero(value.rows(), value.cols());
    m.array() = Scalar(beta1) * m.array() + Scalar(1.0 - beta1) * g;
    v.array() = Scalar(beta2) * v.array() + Scalar(1.0 - beta2) * g.square();
    value.array() -= Scalar(lr) * (m.array() / Scalar(c1)) / ((v.array() / Scalar(c2)).sqrt() + Scalar(epsilon));
  }
  p.adam_steps = step;
}

#define IDDM_INSTANTIATE_NETS(S)                                                                                   \
  template struct ModelParams<S>;                                                                                  \
  template ModelParams<S> init_params<S>(const Architecture&, std::uint64_t);                                      \
  template std::vector<Image<S>> denoiser_forward<S>(ModelParams<S>&, std::span<const Image<S>>,                    \
                                                     std::span<const Image<S>>, std::span<const Image<S>>,          \
                                                     std::span<const int>, ForwardOptions);                         \
  template std::vector<Image<S>> htnet_forward<S>(ModelParams<S>&, std::span<const Image<S>>,                       \
                                                  std::span<const Image<S>>, std::span<const int>, ForwardOptions); \
  template Image<S> denoiser_predict<S>(const ModelParams<S>&, const Image<S>&, const Image<S>&, const Image<S>&,  \
                                        int);                                                                      \
  template Image<S> htnet_predict<S>(const ModelParams<S>&, const Image<S>&, const Image<S>&, int);                \
  template InputGradients<S> backward<S>(ModelParams<S>&, std::span<const Image<S>>);                              \
  template void adam_update<S>(ModelParams<S>&, double, double, double, std::int64_t, double);

IDDM_INSTANTIATE_NETS(float)
IDDM_INSTANTIATE_NETS(double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace iddm
