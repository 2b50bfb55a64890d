#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "iddm/checkpoint.hpp"
#include "iddm/error.hpp"
#include "iddm/nets.hpp"
#include "support.hpp"

using namespace iddm;

namespace {

using Img = Image<double>;

struct Fixture {
  ModelParams<double> net;
  std::vector<Img> x, h, hazy, weights;
  std::vector<int> t{3, 140};

  explicit Fixture(Architecture arch) : net(init_params<double>(arch, 21)) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.1);
    for (auto& [name, v] : net.values)
      if (name.ends_with(".bias"))
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = n(rng);
    for (int k = 0; k < 2; ++k) {
      x.push_back(test::random_image<double>(8, 8, 3, 100 + k, -1.0, 1.0));
      h.push_back(test::random_image<double>(8, 8, 3, 200 + k, 0.0, 0.5));
      hazy.push_back(test::random_image<double>(8, 8, 3, 300 + k));
      weights.push_back(test::random_image<double>(8, 8, 3, 400 + k, -1.0, 1.0));
    }
  }

  std::vector<Img> forward(ForwardOptions opts = {}) {
    if (net.arch.kind == NetKind::kDenoiser) return denoiser_forward<double>(net, x, h, hazy, t, opts);
    return htnet_forward<double>(net, x, hazy, t, opts);
  }

  double loss() {
    const auto out = forward();
    double l = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) l += (out[k].data * weights[k].data).sum();
    return l;
  }
};

double relative(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

void check_gradients(Architecture arch) {
  Fixture f(arch);
  f.forward({.record = true, .param_grads = true, .input_grads = true});
  const InputGradients<double> in = backward<double>(f.net, f.weights);
  const double step = 1e-4;
  std::mt19937_64 rng(9);
  int checked = 0;
  for (auto& [name, value] : f.net.values) {
    std::uniform_int_distribution<Eigen::Index> pick(0, value.size() - 1);
    for (int k = 0; k < 2; ++k) {
      const Eigen::Index i = pick(rng);
      const double orig = value.data()[i];
      value.data()[i] = orig + step;
      const double up = f.loss();
      value.data()[i] = orig - step;
      const double down = f.loss();
      value.data()[i] = orig;
      const double numeric = (up - down) / (2 * step);
      INFO(name << "[" << i << "]");
      CHECK(relative(f.net.grads.at(name).data()[i], numeric) <= 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 20);
  // Gradient with respect to the first input tensor (x_t, or x^ for a hazy-only HtNet).
  std::vector<Img>& first = f.net.arch.kind == NetKind::kDenoiser || f.net.arch.htnet_inputs != HtnetInputs::kHazy
                                ? f.x
                                : f.hazy;
  for (Eigen::Index i : {Eigen::Index(0), Eigen::Index(77), Eigen::Index(191)}) {
    const double orig = first[1].data[i];
    first[1].data[i] = orig + step;
    const double up = f.loss();
    first[1].data[i] = orig - step;
    const double down = f.loss();
    first[1].data[i] = orig;
    CHECK(relative(in.per_input.at(0)[1].data[i], (up - down) / (2 * step)) <= 1e-3);
  }
}

Architecture small_denoiser() {
  Architecture a = denoiser_architecture(4, 2);
  a.time_dim = 8;
  return a;
}

}  // namespace

TEST_SUITE("nets") {
  TEST_CASE("input channel counts") {
    CHECK(denoiser_architecture().input_channels() == 9);
    CHECK(htnet_architecture(HtnetInputs::kHazy).input_channels() == 3);
    CHECK(htnet_architecture(HtnetInputs::kState).input_channels() == 3);
    CHECK(htnet_architecture(HtnetInputs::kStateAndHazy).input_channels() == 6);
    CHECK(htnet_inputs_from_string(to_string(HtnetInputs::kStateAndHazy)) == HtnetInputs::kStateAndHazy);
    CHECK_THROWS_AS(htnet_inputs_from_string("nope"), Error);
  }

  TEST_CASE("time embedding is sinusoidal and bounded") {
    const Eigen::VectorXd e = time_embedding(0, 8);
    CHECK(e.size() == 8);
    CHECK(e.cwiseAbs().maxCoeff() <= 1.0);
    for (int t : {1, 50, 999}) {
      const Eigen::VectorXd v = time_embedding(t, 16);
      for (int i = 0; i < 8; ++i) CHECK(v[i] * v[i] + v[i + 8] * v[i + 8] == doctest::Approx(1.0));
    }
    CHECK_FALSE(time_embedding(3, 8).isApprox(time_embedding(4, 8)));
  }

  TEST_CASE("forward passes are pure and preserve spatial size") {
    Fixture f(small_denoiser());
    const auto a = f.forward();
    const auto b = f.forward();
    REQUIRE(a.size() == 2);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
    CHECK(a[0].height == 8);
    CHECK(a[0].channels == 3);
    // Odd sizes go through the stride-2 path and back.
    ModelParams<float> p = init_params<float>(denoiser_architecture(4, 3), 1);
    const ImageTensor x = test::random_image(11, 7, 3, 2);
    const ImageTensor y = denoiser_predict(p, x, x, x, 5);
    CHECK(y.height == 11);
    CHECK(y.width == 7);
  }

  TEST_CASE("haze estimator output is non-negative") {
    Fixture f(htnet_architecture(HtnetInputs::kStateAndHazy, 4, 2));
    for (const auto& img : f.forward()) CHECK(img.data.minCoeff() >= 0.0);
  }

  TEST_CASE("denoiser gradients match finite differences") { check_gradients(small_denoiser()); }

  TEST_CASE("haze estimator gradients match finite differences") {
    Architecture a = htnet_architecture(HtnetInputs::kHazy, 4, 2);
    a.time_dim = 8;
    check_gradients(a);
    a.htnet_inputs = HtnetInputs::kStateAndHazy;
    check_gradients(a);
  }

  TEST_CASE("backward without a recorded pass fails") {
    ModelParams<float> p = init_params<float>(small_denoiser(), 3);
    std::vector<ImageTensor> g{ImageTensor(8, 8, 3)};
    try {
      backward<float>(p, g);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNoTrace);
    }
  }

  TEST_CASE("adam follows the bias-corrected recurrence") {
    ModelParams<double> p = init_params<double>(small_denoiser(), 4);
    const std::string name = "out.bias";
    const Eigen::MatrixXd start = p.values.at(name);
    Eigen::ArrayXXd m = Eigen::ArrayXXd::Zero(start.rows(), start.cols());
    Eigen::ArrayXXd v = m;
    Eigen::ArrayXXd expected = start.array();
    const double lr = 0.01, b1 = 0.9, b2 = 0.99, eps = 1e-8;
    for (int step = 1; step <= 3; ++step) {
      for (auto& [n, val] : p.values) p.grads[n] = Eigen::MatrixXd::Constant(val.rows(), val.cols(), 0.5 * step - 0.7);
      p.grads_ready = true;
      const Eigen::ArrayXXd g = p.grads.at(name).array();
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      expected -= lr * (m / (1 - std::pow(b1, step))) / ((v / (1 - std::pow(b2, step))).sqrt() + eps);
      adam_update(p, lr, b1, b2, step, eps);
    }
    CHECK((p.values.at(name).array() - expected).abs().maxCoeff() <= 1e-15);
    CHECK(p.adam_steps == 3);
  }

  TEST_CASE("checkpoint round trip is exact") {
    test::TempDir dir;
    ModelParams<float> p = init_params<float>(denoiser_architecture(4, 2), 8);
    for (auto& [name, v] : p.values) {
      p.adam_m[name] = v * 0.5f;
      p.adam_v[name] = v.cwiseAbs();
    }
    p.adam_steps = 17;
    const nlohmann::json meta = {{"stage", "stage1"}, {"iteration", 17}};
    save_checkpoint(p, dir / "a.iddm", meta);
    const Checkpoint c = load_checkpoint(dir / "a.iddm", p.arch);
    CHECK(fingerprint(c.params) == fingerprint(p));
    for (const auto& [name, v] : p.values) {
      CHECK(c.params.values.at(name) == v);
      CHECK(c.params.adam_m.at(name) == p.adam_m.at(name));
      CHECK(c.params.adam_v.at(name) == p.adam_v.at(name));
    }
    CHECK(c.params.adam_steps == 17);
    CHECK(c.metadata.at("iteration") == 17);
  }

  TEST_CASE("checkpoint errors are typed") {
    test::TempDir dir;
    ModelParams<float> p = init_params<float>(denoiser_architecture(4, 2), 8);
    save_checkpoint(p, dir / "a.iddm");
    try {
      load_checkpoint(dir / "a.iddm", denoiser_architecture(8, 2));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kArchitectureMismatch);
    }
    std::ofstream(dir / "bad.iddm") << "IDDM9 garbage";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.iddm"), Error);
    {
      std::ifstream in(dir / "a.iddm", std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), {});
      std::ofstream(dir / "trunc.iddm", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    }
    try {
      load_checkpoint(dir / "trunc.iddm");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCorruptStream);
    }
  }

  TEST_CASE("fingerprint changes with any parameter bit") {
    ModelParams<float> p = init_params<float>(denoiser_architecture(4, 2), 8);
    const auto before = fingerprint(p);
    p.values.begin()->second(0, 0) = std::nextafter(p.values.begin()->second(0, 0), 10.0f);
    CHECK(fingerprint(p) != before);
  }
}
