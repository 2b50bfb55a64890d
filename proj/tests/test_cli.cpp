#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "iddm/asm_physics.hpp"
#include "iddm/imaging_io.hpp"
#include "support.hpp"

using namespace iddm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args, const test::TempDir& dir, const std::string& env = "") {
  const fs::path log = dir / "cli.log";
  const std::string cmd = env + " " + IDDM_CLI_PATH + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kTiny =
    " --iters 3 --T 20 --batch 2 --patch 8 --procedural 4 --scene-size 12 --base-width 4 --seed 1 --log-every 0";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    test::TempDir dir;
    CHECK(cli("--help", dir).code == 0);
    CHECK(cli("", dir).code == 2);
    CHECK(cli("bogus", dir).code == 2);
    CHECK(cli("verify --suite nonsense", dir).code == 2);
    CHECK(cli("synth --procedural 1", dir).code == 2);
    CHECK(cli("synth --procedural 1 --manifest m.jsonl --out " + (dir / "o").string(), dir).code == 2);
    CHECK(cli("synth --procedural 1 --airlight 0.9 --out " + (dir / "o").string(), dir).code == 2);
  }

  TEST_CASE("I/O errors exit with 3") {
    test::TempDir dir;
    CHECK(cli("synth --manifest " + (dir / "missing.jsonl").string() + " --out " + (dir / "o").string(), dir).code == 3);
    CHECK(cli("dehaze --input " + (dir / "none.png").string() + " --denoiser a --htnet b --out " + (dir / "o").string(),
              dir)
              .code == 3);
  }

  TEST_CASE("verify passes and rejects a corrupted schedule") {
    test::TempDir dir;
    const Run ok = cli("verify --suite schedule", dir);
    CHECK(ok.code == 0);
    CHECK(ok.output.find("PASS") != std::string::npos);
    std::vector<double> abar;
    double a = 1.0;
    for (int t = 1; t <= 50; ++t) abar.push_back(a *= 0.98);
    abar[30] = abar[29] * 1.001;  // no longer decreasing
    std::ofstream(dir / "bad.json") << nlohmann::json{{"alpha_bar", abar}}.dump();
    const Run bad = cli("verify --suite schedule --schedule " + (dir / "bad.json").string(), dir);
    CHECK(bad.code == 1);
    CHECK(bad.output.find("FAIL") != std::string::npos);
  }

  TEST_CASE("synth output reproduces the hazy image from the stored files") {
    test::TempDir dir;
    const fs::path out = dir / "synth";
    REQUIRE(cli("synth --procedural 3 --seed 5 --size 16 --depth-scale 2 --out " + out.string(), dir).code == 0);
    CHECK(read_manifest(out / "manifest.jsonl").size() == 3);
    for (const char* id : {"0000", "0001", "0002"}) {
      const std::string base = (out / id).string();
      const nlohmann::json p = nlohmann::json::parse(read_file(base + "_params.json"));
      const ImageTensor clear = load_image(base + "_clear.png");
      const DepthMap depth = load_depth(base + "_depth.png", 2.0f).depth;
      const auto d = synthesize_hazy(clear, depth, HazeParams::uniform(p.at("airlight"), p.at("sigma")));
      CHECK(test::max_abs_diff(clamp01(d.hazy), load_image(base + "_hazy.png")) <= 1.0 / 255.0 + 1e-6);
      CHECK(p.at("airlight").get<double>() >= 0.7);
      CHECK(p.at("sigma").get<double>() <= 1.5);
    }
    // Same seed, same bytes.
    REQUIRE(cli("synth --procedural 1 --seed 5 --size 16 --depth-scale 2 --out " + (dir / "again").string(), dir).code ==
            0);
    CHECK(read_file(out / "0000_hazy.png") == read_file(dir / "again" / "0000_hazy.png"));
  }

  TEST_CASE("effective config is echoed and honours IDDM_SEED") {
    test::TempDir dir;
    const Run r = cli("synth --procedural 1 --size 16 --out " + (dir / "s").string(), dir, "IDDM_SEED=77");
    REQUIRE(r.code == 0);
    CHECK(r.output.find("effective config:") != std::string::npos);
    CHECK(r.output.find("\"seed\":77") != std::string::npos);
  }

  TEST_CASE("train, dehaze and eval end to end") {
    test::TempDir dir;
    const fs::path synth = dir / "synth";
    REQUIRE(cli("synth --procedural 2 --seed 9 --size 16 --out " + synth.string(), dir).code == 0);
    const fs::path models = dir / "models";
    REQUIRE(cli("train-denoiser --out " + models.string() + kTiny, dir).code == 0);
    CHECK(fs::exists(models / "denoiser.iddm"));
    CHECK(read_file(models / "loss_stage1.csv").starts_with("iteration,loss\n1,"));
    REQUIRE(cli("train-htnet --denoiser " + (models / "denoiser.iddm").string() + " --out " + models.string() + kTiny,
                dir)
                .code == 0);
    CHECK(fs::exists(models / "htnet.iddm"));
    // A denoiser checkpoint is not a haze estimator.
    CHECK(cli("train-htnet --denoiser " + (models / "denoiser.iddm").string() + " --resume " +
                  (models / "denoiser.iddm").string() + " --out " + (dir / "x").string() + kTiny,
              dir)
              .code != 0);

    const fs::path hazy_dir = dir / "hazy";
    const fs::path ref_dir = dir / "ref";
    fs::create_directories(hazy_dir);
    fs::create_directories(ref_dir);
    for (const char* id : {"0000", "0001"}) {
      fs::copy_file(synth / (std::string(id) + "_hazy.png"), hazy_dir / (std::string(id) + ".png"));
      fs::copy_file(synth / (std::string(id) + "_clear.png"), ref_dir / (std::string(id) + ".png"));
    }
    const std::string nets = " --denoiser " + (models / "denoiser.iddm").string() + " --htnet " +
                             (models / "htnet.iddm").string();
    for (const char* out : {"r1", "r2"})
      REQUIRE(cli("--threads 1 dehaze --input " + hazy_dir.string() + nets + " --seed 4 --out " + (dir / out).string(),
                  dir)
                  .code == 0);
    CHECK(read_file(dir / "r1" / "0000_restored.png") == read_file(dir / "r2" / "0000_restored.png"));
    CHECK(fs::exists(dir / "r1" / "0001_haze.png"));
    const nlohmann::json info = nlohmann::json::parse(read_file(dir / "r1" / "0000.json"));
    CHECK(info.contains("runtime_seconds"));

    REQUIRE(cli("dehaze --input " + (hazy_dir / "0000.png").string() + nets + " --steps 1 --trace --out " +
                    (dir / "one").string(),
                dir)
                .code == 0);
    CHECK(fs::exists(dir / "one" / "0000_restored.png"));
    CHECK(fs::exists(dir / "one" / "0000_trace" / "summary.json"));

    REQUIRE(cli("eval --restored " + (dir / "r1").string() + " --reference " + ref_dir.string() + " --out " +
                    (dir / "m").string(),
                dir)
                .code == 0);
    const std::string csv = read_file(dir / "m" / "metrics.csv");
    CHECK(csv.starts_with("image_id,psnr,ssim\n0000,"));
    CHECK(nlohmann::json::parse(read_file(dir / "m" / "metrics.json")).at("count") == 2);
  }
}
