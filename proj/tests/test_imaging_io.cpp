#include <doctest.h>

#include <fstream>

#include "iddm/error.hpp"
#include "iddm/imaging_io.hpp"
#include "support.hpp"

using namespace iddm;

TEST_SUITE("imaging_io") {
  TEST_CASE("png round trip stays within one code value") {
    test::TempDir dir;
    for (int channels : {1, 3}) {
      const ImageTensor img = test::random_image(13, 17, channels, 5 + channels);
      const auto path = dir / ("img" + std::to_string(channels) + ".png");
      save_image(img, path);
      const ImageTensor back = load_image(path);
      REQUIRE(back.same_shape(img));
      CHECK(test::max_abs_diff(img, back) <= 1.0 / 255.0 + 1e-7);
    }
  }

  TEST_CASE("saved png bytes are the rounded values") {
    test::TempDir dir;
    ImageTensor img(1, 3, 3);
    img.data << 0.0f, 1.0f, 0.5f, 0.2f, 0.998f, 0.002f, 0.25f, 0.75f, 0.4f;
    save_image(img, dir / "v.png");
    const ImageTensor back = load_image(dir / "v.png");
    for (Eigen::Index i = 0; i < img.size(); ++i)
      CHECK(back.data[i] * 255.0f == doctest::Approx(std::round(img.data[i] * 255.0f)).epsilon(1e-6));
  }

  TEST_CASE("16-bit depth png reloads normalized") {
    test::TempDir dir;
    DepthMap d = test::random_depth(9, 11, 3);
    d.data[0] = 0.0f;
    d.data[1] = 1.0f;
    save_depth_png16(d, dir / "d.png");
    const LoadedDepth back = load_depth(dir / "d.png", 2.0f);
    CHECK_FALSE(back.constant_input);
    CHECK(back.depth.data.minCoeff() == 0.0f);
    CHECK(back.depth.data.maxCoeff() == doctest::Approx(2.0f));
    CHECK((back.depth.data - 2.0f * d.data).abs().maxCoeff() <= 2.0f / 65535.0f + 1e-6f);
  }

  TEST_CASE("pfm round trip preserves rows") {
    test::TempDir dir;
    DepthMap d(4, 5);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) d(y, x) = float(y * 5 + x);
    save_pfm(d, dir / "d.pfm");
    const LoadedDepth back = load_depth(dir / "d.pfm");
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) CHECK(back.depth(y, x) == doctest::Approx(d(y, x) / 19.0f));
  }

  TEST_CASE("constant depth maps to zeros and is flagged") {
    test::TempDir dir;
    save_pfm(DepthMap::constant(6, 6, 3.0f), dir / "c.pfm");
    const LoadedDepth back = load_depth(dir / "c.pfm");
    CHECK(back.constant_input);
    CHECK(back.depth.data.isZero());
  }

  TEST_CASE("load_depth never yields negatives or NaN") {
    Eigen::ArrayXd raw(6);
    raw << -3.0, 0.5, 7.0, 1e-9, 2.0, -3.0;
    const LoadedDepth d = normalize_depth(raw, 2, 3, 1.5f);
    CHECK(d.depth.data.allFinite());
    CHECK(d.depth.data.minCoeff() >= 0.0f);
  }

  TEST_CASE("pfm with non-finite or negative depth is rejected") {
    test::TempDir dir;
    auto write_pfm = [&](const std::string& name, float v) {
      std::ofstream out(dir / name, std::ios::binary);
      out << "Pf\n2 1\n-1.0\n";
      const float vals[2] = {1.0f, v};
      out.write(reinterpret_cast<const char*>(vals), sizeof vals);
    };
    write_pfm("nan.pfm", std::nanf(""));
    write_pfm("neg.pfm", -1.0f);
    CHECK_THROWS_AS(load_depth(dir / "nan.pfm"), Error);
    CHECK_THROWS_AS(load_depth(dir / "neg.pfm"), Error);
  }

  TEST_CASE("unsupported and missing files raise typed errors") {
    test::TempDir dir;
    std::ofstream(dir / "x.jpg") << "not an image";
    try {
      load_image(dir / "x.jpg");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kUnsupportedFormat);
    }
    try {
      load_image(dir / "missing.png");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kFileNotFound);
    }
    std::ofstream(dir / "trunc.png") << "\x89PNG\r\n\x1a\n";
    CHECK_THROWS_AS(load_image(dir / "trunc.png"), Error);
  }

  TEST_CASE("generate_scene is a pure function of its arguments") {
    const auto [a_img, a_depth] = generate_scene(42, 24, 20);
    const auto [b_img, b_depth] = generate_scene(42, 24, 20);
    const auto [c_img, c_depth] = generate_scene(43, 24, 20);
    CHECK(a_img == b_img);
    CHECK(a_depth == b_depth);
    CHECK_FALSE(a_img == c_img);
    CHECK(a_img.height == 24);
    CHECK(a_img.width == 20);
    CHECK(a_img.data.minCoeff() >= 0.0f);
    CHECK(a_img.data.maxCoeff() <= 1.0f);
    CHECK(a_depth.data.minCoeff() == 0.0f);
    CHECK(a_depth.data.maxCoeff() == 1.0f);
  }

  TEST_CASE("manifest paths resolve against the manifest directory") {
    test::TempDir dir;
    std::filesystem::create_directories(dir / "sub");
    std::ofstream(dir / "sub" / "m.jsonl") << R"({"clear": "a.png", "depth": "/abs/b.pfm"})" << "\n\n"
                                           << R"({"clear": "c.png", "depth": "d.png"})" << "\n";
    const auto entries = read_manifest(dir / "sub" / "m.jsonl");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].clear == dir / "sub" / "a.png");
    CHECK(entries[0].depth == std::filesystem::path("/abs/b.pfm"));
    CHECK(entries[1].depth == dir / "sub" / "d.png");
  }

  TEST_CASE("malformed manifest line is a corrupt stream") {
    test::TempDir dir;
    std::ofstream(dir / "m.jsonl") << R"({"clear": "a.png"})" << "\n";
    try {
      read_manifest(dir / "m.jsonl");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCorruptStream);
    }
  }
}
