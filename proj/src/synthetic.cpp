#include "stageseq/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "stageseq/dataset.hpp"
#include "stageseq/error.hpp"

namespace stageseq {

void SynthConfig::validate() const {
  if (stages < 2) throw ArgumentError("stages must be at least 2");
  if (per_stage < 1) throw ArgumentError("per_stage must be at least 1");
  if (size < 8) throw ArgumentError("image size must be at least 8");
  if (lesion_base < 0) throw ArgumentError("lesion_base must be nonnegative");
  if (!(noise_sigma >= 0.0)) throw ArgumentError("noise_sigma must be nonnegative");
  if (!std::isfinite(drift)) throw ArgumentError("drift must be finite");
  if (!stage_names.empty() && static_cast<int>(stage_names.size()) != stages) {
    throw ArgumentError("expected " + std::to_string(stages) + " stage names");
  }
  std::set<std::string> seen;
  for (const std::string& name : stage_names) {
    if (name.empty() || !seen.insert(name).second) throw ArgumentError("stage names must be nonempty and distinct");
  }
}

double blob_sigma(int size) { return std::max(0.75, size / 32.0); }

double background_intensity(int size, std::size_t y, std::size_t x) {
  const double scale = 32.0 / size;
  const double u = x * scale;
  const double v = y * scale;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return 0.25 + 0.08 * std::sin(two_pi * (0.11 * u + 0.05 * v) + 0.8 * std::sin(two_pi * 0.04 * v));
}

Image render_stage_image(const SynthConfig& config, int stage, Rng& rng, std::vector<BlobCenter>* centers) {
  const auto n = static_cast<std::size_t>(config.size);
  const double sigma = blob_sigma(config.size);
  const double margin = 3.0 * sigma;
  const double min_separation = 6.0 * sigma;
  const int blob_count = config.lesion_base * stage;

  std::uniform_real_distribution<double> position(margin, config.size - 1 - margin);
  std::vector<BlobCenter> placed;
  int attempts = 0;
  while (static_cast<int>(placed.size()) < blob_count) {
    if (++attempts > 100000) {
      throw ArgumentError("cannot place " + std::to_string(blob_count) + " separated lesions in a " +
                          std::to_string(config.size) + "px image");
    }
    const BlobCenter c{position(rng), position(rng)};
    const bool clear = std::all_of(placed.begin(), placed.end(), [&](const BlobCenter& o) {
      return std::hypot(o.y - c.y, o.x - c.x) >= min_separation;
    });
    if (clear) placed.push_back(c);
  }

  Image image(n, n);
  const double offset = config.drift * stage;
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::normal_distribution<double> noise(0.0, config.noise_sigma > 0.0 ? config.noise_sigma : 1.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double v = background_intensity(config.size, y, x) + offset;
      for (const BlobCenter& c : placed) {
        const double dy = static_cast<double>(y) - c.y;
        const double dx = static_cast<double>(x) - c.x;
        v += kBlobAmplitude * std::exp(-(dy * dy + dx * dx) * inv_two_var);
      }
      if (config.noise_sigma > 0.0) v += noise(rng);
      image.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  if (centers) *centers = std::move(placed);
  return image;
}

nlohmann::json to_json(const SynthConfig& config) {
  return {
      {"stages", config.stages},           {"per_stage", config.per_stage},
      {"size", config.size},               {"lesion_base", config.lesion_base},
      {"noise_sigma", config.noise_sigma}, {"drift", config.drift},
      {"seed", config.seed},
  };
}

std::size_t generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  const std::vector<std::string> names =
      config.stage_names.empty() ? default_stage_names(config.stages) : config.stage_names;
  Rng rng = make_rng(config.seed);
  std::ofstream manifest(out_dir / kManifestName, std::ios::binary);
  if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());
  manifest << "path,stage\n";
  std::size_t written = 0;
  char name[64];
  for (int k = 0; k < config.stages; ++k) {
    for (int i = 0; i < config.per_stage; ++i) {
      std::snprintf(name, sizeof name, "images/stage%d_%05d.pgm", k, i);
      write_pgm(out_dir / name, render_stage_image(config, k, rng));
      manifest << name << ',' << k << '\n';
      ++written;
    }
  }
  if (!manifest) throw IoError("failed writing manifest in " + out_dir.string());

  nlohmann::json sidecar = {
      {"format", "pgm-p5"},
      {"generator", to_json(config)},
      {"stages", config.stages},
      {"stage_names", names},
      {"count", written},
  };
  std::ofstream side(out_dir / kSidecarName, std::ios::binary);
  if (!side) throw IoError("cannot write " + (out_dir / kSidecarName).string());
  side << sidecar.dump(2) << '\n';
  return written;
}

int count_bright_components(const Image& image, double threshold) {
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  std::vector<char> seen(h * w, 0);
  std::vector<std::size_t> stack;
  int components = 0;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (seen[start] || image.pixels[start * image.channels] <= threshold) continue;
    ++components;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / w;
      const std::size_t x = p % w;
      auto visit = [&](std::size_t q) {
        if (!seen[q] && image.pixels[q * image.channels] > threshold) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
    }
  }
  return components;
}

}  // namespace stageseq
