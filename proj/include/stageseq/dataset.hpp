#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stageseq/image.hpp"

namespace stageseq {

// In-memory labeled image collection with a per-stage index for the
// sequence sampler.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(int stages, std::vector<std::string> stage_names);

  void add(Image image, StageLabel label, std::string source = {});

  int stages() const noexcept { return stages_; }
  const std::vector<std::string>& stage_names() const noexcept { return stage_names_; }
  std::size_t size() const noexcept { return images_.size(); }
  bool empty() const noexcept { return images_.empty(); }

  const Image& image(std::size_t i) const { return images_.at(i); }
  StageLabel label(std::size_t i) const { return labels_.at(i); }
  const std::string& source(std::size_t i) const { return sources_.at(i); }
  const std::vector<Image>& images() const noexcept { return images_; }
  const std::vector<StageLabel>& labels() const noexcept { return labels_; }

  // Dataset indices of every image with the given stage, in insertion order.
  const std::vector<std::size_t>& indices_of(StageLabel stage) const;
  std::size_t class_count(StageLabel stage) const { return indices_of(stage).size(); }
  std::vector<std::size_t> class_counts() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;

 private:
  int stages_ = 0;
  std::vector<std::string> stage_names_;
  std::vector<Image> images_;
  std::vector<StageLabel> labels_;
  std::vector<std::string> sources_;
  std::vector<std::vector<std::size_t>> by_stage_;
};

// "S0", "S1", ...
std::vector<std::string> default_stage_names(int stages);

// 8-bit binary PGM (P5, maxval 255). Pixel values are clamped to [0,1] and
// rounded to the nearest level.
void write_pgm(const std::filesystem::path& path, const Image& image);
Image read_pgm(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kSidecarName = "dataset.json";

// Accepts either a dataset directory or the manifest path itself. Stage count
// and names come from the JSON sidecar next to the manifest when present;
// otherwise the stage count is one past the largest label seen.
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace stageseq
