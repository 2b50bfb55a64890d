#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "iddm/checkpoint.hpp"
#include "iddm/error.hpp"
#include "iddm/training.hpp"
#include "support.hpp"

using namespace iddm;

namespace {

TrainConfig tiny() {
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch = 2;
  cfg.patch = 8;
  cfg.scene_size = 12;
  cfg.procedural_scenes = 4;
  cfg.base_width = 4;
  cfg.time_dim = 8;
  cfg.iters_stage1 = 4;
  cfg.iters_stage2 = 3;
  cfg.seed = 3;
  return cfg;
}

SceneSource tiny_source(const TrainConfig& cfg) {
  return SceneSource::procedural(cfg.procedural_scenes, cfg.scene_size, cfg.seed);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("batches obey the scattering physics") {
    const TrainConfig cfg = tiny();
    TrainRng rng(1);
    const TrainBatch b = sample_batch(tiny_source(cfg), cfg, rng);
    REQUIRE(b.size() == 2);
    for (std::size_t i = 0; i < b.size(); ++i) {
      Image<float> r = b.hazy[i];
      r.data -= b.x0[i].data + b.h_total[i].data;
      CHECK(r.data.abs().maxCoeff() == 0.0f);
      CHECK((b.h_t[i].data <= b.h_total[i].data + 1e-7f).all());
      CHECK(b.h_t[i].data.minCoeff() >= 0.0f);
      CHECK(b.t[i] >= 1);
      CHECK(b.t[i] <= cfg.steps);
      CHECK(b.clear[i].height == cfg.patch);
      CHECK(b.params[i].airlight[0] >= cfg.airlight_range.lo);
      CHECK(b.params[i].airlight[0] <= cfg.airlight_range.hi);
      CHECK(b.params[i].scattering >= cfg.sigma_range.lo);
      CHECK(b.params[i].scattering <= cfg.sigma_range.hi);
      // x0 = J * T_r with T_r in (0, 1].
      CHECK((b.x0[i].data <= b.clear[i].data + 1e-7f).all());
    }
  }

  TEST_CASE("sampled t covers the whole range") {
    TrainConfig cfg = tiny();
    cfg.batch = 64;
    TrainRng rng(2);
    const SceneSource src = tiny_source(cfg);
    std::vector<int> seen(cfg.steps + 1, 0);
    for (int k = 0; k < 10; ++k)
      for (int t : sample_batch(src, cfg, rng).t) ++seen[t];
    for (int t = 1; t <= cfg.steps; ++t) CHECK(seen[t] > 0);
  }

  TEST_CASE("loss gradients match finite differences") {
    const std::vector<ImageTensor> pred{test::random_image(3, 3, 3, 1)};
    const std::vector<ImageTensor> target{test::random_image(3, 3, 3, 2)};
    const LossAndGrad mse = mse_loss(pred, target);
    const LossAndGrad l1 = l1_loss(pred, target);
    const double n = 27.0;
    double sq = 0.0, ab = 0.0;
    for (Eigen::Index i = 0; i < 27; ++i) {
      const double d = double(pred[0].data[i]) - target[0].data[i];
      sq += d * d;
      ab += std::abs(d);
      CHECK(mse.grad[0].data[i] == doctest::Approx(2.0 * d / n));
      CHECK(l1.grad[0].data[i] == doctest::Approx(((d > 0) - (d < 0)) / n));
    }
    CHECK(mse.loss == doctest::Approx(sq / n));
    CHECK(l1.loss == doctest::Approx(ab / n));
    CHECK(l1_loss(target, target).grad[0].data.isZero());
  }

  TEST_CASE("learning-rate schedule") {
    TrainConfig cfg;
    cfg.lr = 1.0;
    cfg.warmup = 0;
    cfg.cosine_decay = false;
    CHECK(cfg.lr_at(1, 100) == 1.0);
    cfg.warmup = 10;
    CHECK(cfg.lr_at(5, 100) == doctest::Approx(0.5));
    CHECK(cfg.lr_at(11, 100) == 1.0);
    cfg.cosine_decay = true;
    CHECK(cfg.lr_at(11, 100) == doctest::Approx(1.0));
    CHECK(cfg.lr_at(56, 100) == doctest::Approx(0.5));
    CHECK(cfg.lr_at(100, 100) == doctest::Approx(0.5 * (1 + std::cos(M_PI * 89.0 / 90.0))));
  }

  TEST_CASE("config json round trip and validation") {
    TrainConfig cfg = tiny();
    cfg.cosine_decay = false;
    cfg.warmup = 7;
    cfg.htnet_inputs = HtnetInputs::kStateAndHazy;
    const TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(TrainConfig::from_json(nlohmann::json::object()).to_json() == TrainConfig{}.to_json());
    CHECK_THROWS_AS(TrainConfig::from_json({{"learning_rate", 1.0}}), Error);
    TrainConfig bad = tiny();
    bad.patch = 16;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = tiny();
    bad.sigma_range = {0.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK(TrainConfig::full_scale().steps == 1000);
  }

  TEST_CASE("stage-2 loss vanishes at the true haze") {
    const TrainConfig cfg = tiny();
    TrainRng rng(4);
    const TrainBatch b = sample_batch(tiny_source(cfg), cfg, rng);
    const ModelParams<float> den = init_params<float>(cfg.denoiser_arch(), 5);
    const auto x_t = diffuse_batch(b, cfg.schedule());
    const Stage2Objective at_truth = stage2_objective(den, b, x_t, b.h_t);
    CHECK(at_truth.loss() == 0.0);
    std::vector<ImageTensor> off = b.h_t;
    for (auto& h : off) h.data += 0.05f;
    const Stage2Objective shifted = stage2_objective(den, b, x_t, off);
    CHECK(shifted.haze_term == doctest::Approx(0.05).epsilon(1e-4));
    CHECK(shifted.consistency_term > 0.0);
  }

  TEST_CASE("stage-2 haze gradient matches finite differences") {
    const TrainConfig cfg = tiny();
    TrainRng rng(6);
    const TrainBatch b = sample_batch(tiny_source(cfg), cfg, rng);
    const ModelParams<float> den = init_params<float>(cfg.denoiser_arch(), 7);
    const auto x_t = diffuse_batch(b, cfg.schedule());
    std::vector<ImageTensor> h = b.h_t;
    for (std::size_t k = 0; k < h.size(); ++k) h[k].data += test::random_image(8, 8, 3, 50 + k, 0.05, 0.2).data;
    const Stage2Objective base = stage2_objective(den, b, x_t, h);
    const float step = 1e-3f;
    int agreed = 0;
    for (Eigen::Index i : {Eigen::Index(3), Eigen::Index(50), Eigen::Index(100), Eigen::Index(170)}) {
      std::vector<ImageTensor> up = h, down = h;
      up[0].data[i] += step;
      down[0].data[i] -= step;
      const double numeric = (stage2_objective(den, b, x_t, up).loss() - stage2_objective(den, b, x_t, down).loss()) /
                             (2.0 * step);
      const double analytic = base.grad_h_est[0].data[i];
      if (std::abs(numeric - analytic) <= 0.05 * std::max(std::abs(analytic), 1e-4)) ++agreed;
    }
    // An L1 kink may fall inside one difference interval.
    CHECK(agreed >= 3);
  }

  TEST_CASE("stage 2 leaves the denoiser bit-identical") {
    const TrainConfig cfg = tiny();
    const SceneSource src = tiny_source(cfg);
    const TrainResult s1 = train_stage1(cfg, src);
    const auto before = fingerprint(s1.params);
    const TrainResult s2 = train_stage2(cfg, s1.params, src);
    CHECK(fingerprint(s1.params) == before);
    CHECK(s2.losses.size() == 3);
    CHECK(s2.params.arch.kind == NetKind::kHazeEstimator);
  }

  TEST_CASE("training is reproducible from seed and config") {
    const TrainConfig cfg = tiny();
    const SceneSource src = tiny_source(cfg);
    const TrainResult a = train_stage1(cfg, src);
    const TrainResult b = train_stage1(cfg, src);
    CHECK(a.losses == b.losses);
    CHECK(fingerprint(a.params) == fingerprint(b.params));
    TrainConfig other = cfg;
    other.seed = 4;
    CHECK(train_stage1(other, tiny_source(other)).losses != a.losses);
  }

  TEST_CASE("resuming from a checkpoint continues the same run") {
    test::TempDir dir;
    TrainConfig cfg = tiny();
    cfg.checkpoint_every = 2;
    const SceneSource src = tiny_source(cfg);
    TrainOptions opts;
    opts.checkpoint_dir = dir.path();
    const TrainResult full = train_stage1(cfg, src, opts);
    CHECK(std::filesystem::exists(dir / "stage1_2.iddm"));
    CHECK(std::filesystem::exists(dir / "stage1_latest.iddm"));
    TrainOptions resume;
    resume.resume = dir / "stage1_2.iddm";
    const TrainResult rest = train_stage1(cfg, src, resume);
    CHECK(rest.first_iteration == 3);
    REQUIRE(rest.losses.size() == 2);
    CHECK(rest.losses[0] == full.losses[2]);
    CHECK(rest.losses[1] == full.losses[3]);
    CHECK(fingerprint(rest.params) == fingerprint(full.params));
    // A stage-1 checkpoint cannot seed stage 2.
    CHECK_THROWS_AS(train_stage2(cfg, full.params, src, resume), Error);
  }

  TEST_CASE("manifest source loads pairs") {
    test::TempDir dir;
    for (int k = 0; k < 2; ++k) {
      const auto [img, depth] = generate_scene(k, 12, 12);
      save_image(img, dir / ("c" + std::to_string(k) + ".png"));
      save_depth_png16(depth, dir / ("d" + std::to_string(k) + ".png"));
      std::ofstream(dir / "m.jsonl", std::ios::app)
          << nlohmann::json{{"clear", "c" + std::to_string(k) + ".png"}, {"depth", "d" + std::to_string(k) + ".png"}}.dump()
          << "\n";
    }
    const SceneSource src = SceneSource::from_manifest(dir / "m.jsonl");
    CHECK(src.scenes.size() == 2);
    CHECK(src.scenes[1].second.data.maxCoeff() == doctest::Approx(1.0f));
    std::ofstream(dir / "empty.jsonl") << "";
    CHECK_THROWS_AS(SceneSource::from_manifest(dir / "empty.jsonl"), Error);
  }

  TEST_CASE("loss csv and smoothing") {
    test::TempDir dir;
    write_loss_csv({0.5, 0.25}, dir / "l.csv", 10);
    std::ifstream in(dir / "l.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "iteration,loss\n10,0.5\n11,0.25\n");
    CHECK(smooth({1, 2, 3, 4}, 2) == std::vector<double>{1, 1.5, 2.5, 3.5});
  }
}
