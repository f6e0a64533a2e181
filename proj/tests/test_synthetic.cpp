#include "stageseq/dataset.hpp"
#include "stageseq/error.hpp"
#include "stageseq/synthetic.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace stageseq;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.stages = 1;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = SynthConfig{};
  cfg.size = 7;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = SynthConfig{};
  cfg.noise_sigma = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = SynthConfig{};
  cfg.per_stage = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = SynthConfig{};
  cfg.stage_names = {"a", "b", "a", "c"};
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("stage k carries lesion_base*k blobs inside the image") {
  SynthConfig cfg;
  Rng rng = make_rng(1);
  for (int k = 0; k < cfg.stages; ++k) {
    std::vector<BlobCenter> centers;
    Image img = render_stage_image(cfg, k, rng, &centers);
    CHECK(img.height == 32);
    CHECK(centers.size() == static_cast<std::size_t>(cfg.lesion_base * k));
    for (double v : img.pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("blob count recovers the stage when noise and drift are off") {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.drift = 0.0;
  Rng rng = make_rng(2);
  int correct = 0, total = 0;
  for (int k = 0; k < cfg.stages; ++k) {
    for (int n = 0; n < 100; ++n) {
      Image img = render_stage_image(cfg, k, rng);
      const int blobs = count_bright_components(img, kBlobThreshold);
      correct += (blobs / cfg.lesion_base == k) && blobs % cfg.lesion_base == 0;
      ++total;
    }
  }
  CHECK(correct == total);
}

TEST_CASE("mean intensity increases with stage") {
  SynthConfig cfg;
  Rng rng = make_rng(3);
  double prev = -1.0;
  for (int k = 0; k < cfg.stages; ++k) {
    double sum = 0.0;
    for (int n = 0; n < 100; ++n) {
      Image img = render_stage_image(cfg, k, rng);
      for (double v : img.pixels) sum += v;
    }
    const double mean = sum / (100.0 * 32 * 32);
    CHECK(mean > prev);
    prev = mean;
  }
}

TEST_CASE("generation is deterministic and loads back") {
  TempDir a("gen_a"), b("gen_b");
  SynthConfig cfg;
  cfg.per_stage = 5;
  cfg.stage_names = {"NDR", "SDR", "PPDR", "PDR"};
  CHECK(generate(cfg, a.path()) == 20);
  CHECK(generate(cfg, b.path()) == 20);
  CHECK(slurp(a.path() / kManifestName) == slurp(b.path() / kManifestName));
  CHECK(slurp(a.path() / kSidecarName) == slurp(b.path() / kSidecarName));
  for (const auto& entry : std::filesystem::directory_iterator(a.path() / "images")) {
    CHECK(slurp(entry.path()) == slurp(b.path() / "images" / entry.path().filename()));
  }

  LabeledDataset data = load_dataset(a.path());
  CHECK(data.stages() == 4);
  CHECK(data.stage_names() == cfg.stage_names);
  for (std::size_t c : data.class_counts()) CHECK(c == 5);
  LabeledDataset via_manifest = load_dataset(a.path() / kManifestName);
  CHECK(via_manifest.size() == 20);

  Rng rng = make_rng(cfg.seed);
  Image first = render_stage_image(cfg, 0, rng);
  double worst = 0.0;
  for (std::size_t i = 0; i < first.pixels.size(); ++i) worst = std::max(worst, std::abs(first.pixels[i] - data.image(0).pixels[i]));
  CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("pgm round trip is within one quantization level") {
  TempDir dir("pgm");
  std::mt19937_64 r(4);
  Image img = testing_support::random_image(7, 11, r);
  img.pixels[0] = 0.0;
  img.pixels[1] = 1.0;
  write_pgm(dir.path() / "x.pgm", img);
  Image back = read_pgm(dir.path() / "x.pgm");
  CHECK(back.height == 7);
  CHECK(back.width == 11);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1.0 / 255.0);
  CHECK(back.pixels[0] == 0.0);
  CHECK(back.pixels[1] == 1.0);

  write_text(dir.path() / "comment.pgm", std::string("P5\n# note\n2 1\n255\n") + '\x00' + '\xff');
  Image c = read_pgm(dir.path() / "comment.pgm");
  CHECK(c.pixels == std::vector<double>{0.0, 1.0});

  write_text(dir.path() / "short.pgm", "P5\n4 4\n255\nab");
  CHECK_THROWS_AS(read_pgm(dir.path() / "short.pgm"), DataError);
  write_text(dir.path() / "ascii.pgm", "P2\n1 1\n255\n0\n");
  CHECK_THROWS_AS(read_pgm(dir.path() / "ascii.pgm"), DataError);
  CHECK_THROWS_AS(read_pgm(dir.path() / "missing.pgm"), DataError);
}

TEST_CASE("manifest errors carry the row number") {
  TempDir dir("manifest");
  SynthConfig cfg;
  cfg.per_stage = 2;
  generate(cfg, dir.path());
  const auto manifest = dir.path() / kManifestName;
  std::string text = slurp(manifest);

  write_text(manifest, text + "images/stage0_00000.pgm,4\n");
  try {
    load_dataset(dir.path());
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 10") != std::string::npos);
  }

  write_text(manifest, text + "images/nope.pgm,1\n");
  CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
  write_text(manifest, text + "images/stage0_00000.pgm\n");
  CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
  write_text(manifest, text + "images/stage0_00000.pgm,x\n");
  CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
  CHECK_THROWS_AS(load_dataset(dir.path() / "absent"), DataError);
}

TEST_CASE("unwritable output is an io error") {
  TempDir dir("unwritable");
  write_text(dir.path() / "file", "x");
  SynthConfig cfg;
  cfg.per_stage = 1;
  CHECK_THROWS_AS(generate(cfg, dir.path() / "file" / "sub"), IoError);
}

TEST_CASE("sidecar echoes the generator config") {
  SynthConfig cfg;
  cfg.seed = 42;
  nlohmann::json j = to_json(cfg);
  CHECK(j["seed"] == 42);
  CHECK(j["stages"] == 4);
  CHECK(j["per_stage"] == 120);
}

TEST_CASE("connected components") {
  Image img(6, 6, 1, 0.0);
  img.at(0, 0) = img.at(0, 1) = 1.0;
  img.at(3, 3) = 1.0;
  img.at(4, 4) = 1.0;  // diagonal only: separate component
  CHECK(count_bright_components(img, 0.5) == 3);
}
