#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "iddm/metrics.hpp"
#include "support.hpp"

using namespace iddm;

namespace {

// Uniform 8x8 non-overlapping windows on the channel mean, written with plain loops.
double ssim_oracle(const ImageTensor& a, const ImageTensor& b) {
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int wy = 0; wy + 8 <= a.height; wy += 8)
    for (int wx = 0; wx + 8 <= a.width; wx += 8) {
      double ga[64], gb[64], ma = 0, mb = 0;
      for (int i = 0; i < 64; ++i) {
        const int y = wy + i / 8, x = wx + i % 8;
        ga[i] = gb[i] = 0;
        for (int c = 0; c < a.channels; ++c) {
          ga[i] += a(y, x, c) / double(a.channels);
          gb[i] += b(y, x, c) / double(a.channels);
        }
        ma += ga[i] / 64;
        mb += gb[i] / 64;
      }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 64; ++i) {
        va += (ga[i] - ma) * (ga[i] - ma) / 64;
        vb += (gb[i] - mb) * (gb[i] - mb) / 64;
        cov += (ga[i] - ma) * (gb[i] - mb) / 64;
      }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("psnr worked examples") {
    const ImageTensor a = ImageTensor::constant(8, 8, 3, 0.5f);
    ImageTensor b = a;
    b.data += 0.1f;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
    const ImageTensor zero(8, 8, 3);
    CHECK(psnr(a, zero) == doctest::Approx(6.0206).epsilon(1e-4));
    CHECK(std::isinf(psnr(a, a)));
  }

  TEST_CASE("psnr and ssim are symmetric") {
    const ImageTensor a = test::random_image(16, 24, 3, 1);
    const ImageTensor b = test::random_image(16, 24, 3, 2);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  }

  TEST_CASE("psnr decreases strictly with noise amplitude") {
    const ImageTensor clean = test::random_image(16, 16, 3, 3, 0.2, 0.8);
    const ImageTensor noise = test::random_image(16, 16, 3, 4, -1.0, 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (float amp : {0.01f, 0.02f, 0.05f, 0.1f, 0.2f}) {
      ImageTensor noisy = clean;
      noisy.data += amp * noise.data;
      const double p = psnr(clean, noisy);
      CHECK(p < prev);
      prev = p;
    }
  }

  TEST_CASE("ssim matches the window oracle") {
    const ImageTensor a = test::random_image(20, 17, 3, 5);
    ImageTensor b = a;
    b.data = 0.7f * a.data + 0.3f * test::random_image(20, 17, 3, 6).data;
    CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
    CHECK(ssim(a, a) == doctest::Approx(1.0));
    const ImageTensor flat_a = ImageTensor::constant(8, 8, 3, 0.5f);
    const ImageTensor flat_b = ImageTensor::constant(8, 8, 3, 0.25f);
    CHECK(ssim(flat_a, flat_b) == doctest::Approx((0.25 + 1e-4) / (0.3125 + 1e-4)));
    CHECK_THROWS(ssim(ImageTensor(4, 4, 3), ImageTensor(4, 4, 3)));
  }

  TEST_CASE("report aggregates and exports") {
    test::TempDir dir;
    MetricReport r;
    r.add({"a", 20.0, 0.5});
    r.add({"b", 30.0, 0.7});
    r.add({"c", std::numeric_limits<double>::infinity(), 1.0});
    CHECK(r.mean_psnr == doctest::Approx(25.0));
    CHECK(r.mean_ssim == doctest::Approx(2.2 / 3));
    r.write_csv(dir / "m.csv");
    std::ifstream in(dir / "m.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str().starts_with("image_id,psnr,ssim\na,20,0.5\n"));
    const auto j = r.aggregate_json();
    CHECK(j.at("count") == 3);
    CHECK(j.at("mean_psnr").get<double>() == doctest::Approx(25.0));
    MetricReport same;
    same.add("x", ImageTensor(8, 8, 3), ImageTensor(8, 8, 3));
    CHECK(same.aggregate_json().at("mean_psnr").is_null());
  }
}
