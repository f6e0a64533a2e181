#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stageseq/image.hpp"
#include "stageseq/rng.hpp"

namespace stageseq {

// Stage-progressive synthetic images. A stage-k image carries exactly
// lesion_base*k bright Gaussian blobs (discrete cue) over a fixed sinusoidal
// background shared by all stages, plus a global brightness offset drift*k
// (continuous cue) and clamped Gaussian pixel noise.
struct SynthConfig {
  int stages = 4;
  int per_stage = 120;
  int size = 32;
  int lesion_base = 2;
  double noise_sigma = 0.05;
  double drift = 0.03;
  std::uint64_t seed = 7;
  std::vector<std::string> stage_names;  // empty: S0..S{K-1}

  void validate() const;
};

struct BlobCenter {
  double y;
  double x;
};

inline constexpr double kBlobAmplitude = 0.6;
// Intensity between the brightest background pixel and the dimmest blob peak
// at zero noise and zero drift.
inline constexpr double kBlobThreshold = 0.55;

double blob_sigma(int size);
double background_intensity(int size, std::size_t y, std::size_t x);

// Renders one image of `stage`. Blob centers are written to `centers` when
// non-null.
Image render_stage_image(const SynthConfig& config, int stage, Rng& rng, std::vector<BlobCenter>* centers = nullptr);

// Writes images/stage<k>_<n>.pgm, manifest.csv and dataset.json under
// `out_dir`. Returns the number of images written. Throws IoError if the
// directory cannot be written.
std::size_t generate(const SynthConfig& config, const std::filesystem::path& out_dir);

nlohmann::json to_json(const SynthConfig& config);

// Number of 4-connected components with intensity above `threshold`.
int count_bright_components(const Image& image, double threshold);

}  // namespace stageseq
