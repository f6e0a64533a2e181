#include "stageseq/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stageseq/error.hpp"

namespace stageseq {

LabeledDataset::LabeledDataset(int stages, std::vector<std::string> stage_names)
    : stages_(stages), stage_names_(std::move(stage_names)), by_stage_(stages > 0 ? stages : 0) {
  if (stages < 2) throw ArgumentError("a dataset needs at least 2 stages, got " + std::to_string(stages));
  if (stage_names_.empty()) stage_names_ = default_stage_names(stages);
  if (static_cast<int>(stage_names_.size()) != stages) {
    throw ArgumentError("expected " + std::to_string(stages) + " stage names, got " +
                        std::to_string(stage_names_.size()));
  }
}

void LabeledDataset::add(Image image, StageLabel label, std::string source) {
  if (label < 0 || label >= stages_) {
    throw DataError("stage label " + std::to_string(label) + " outside [0, " + std::to_string(stages_ - 1) + "]");
  }
  by_stage_[label].push_back(images_.size());
  images_.push_back(std::move(image));
  labels_.push_back(label);
  sources_.push_back(std::move(source));
}

const std::vector<std::size_t>& LabeledDataset::indices_of(StageLabel stage) const {
  if (stage < 0 || stage >= stages_) throw ArgumentError("stage " + std::to_string(stage) + " out of range");
  return by_stage_[stage];
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts;
  for (const auto& members : by_stage_) counts.push_back(members.size());
  return counts;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out(stages_, stage_names_);
  for (std::size_t i : indices) out.add(images_.at(i), labels_.at(i), sources_.at(i));
  return out;
}

std::vector<std::string> default_stage_names(int stages) {
  std::vector<std::string> names;
  for (int k = 0; k < stages; ++k) names.push_back("S" + std::to_string(k));
  return names;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1) throw DimensionError("PGM output requires a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (next_token(in) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  long width = 0, height = 0, maxval = 0;
  try {
    width = std::stol(next_token(in));
    height = std::stol(next_token(in));
    maxval = std::stol(next_token(in));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw DataError(path.string() + ": unsupported PGM geometry or maxval");
  }
  Image image(static_cast<std::size_t>(height), static_cast<std::size_t>(width));
  std::vector<unsigned char> bytes(image.pixels.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw DataError(path.string() + ": truncated pixels");
  const double scale = 1.0 / static_cast<double>(maxval);
  std::transform(bytes.begin(), bytes.end(), image.pixels.begin(), [scale](unsigned char b) { return b * scale; });
  return image;
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path manifest = fs::is_directory(path) ? path / kManifestName : path;
  const fs::path root = manifest.parent_path();
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());

  int stages = -1;
  std::vector<std::string> names;
  const fs::path sidecar = root / kSidecarName;
  if (fs::exists(sidecar)) {
    std::ifstream sc(sidecar);
    try {
      const auto meta = nlohmann::json::parse(sc);
      stages = meta.at("stages").get<int>();
      if (meta.contains("stage_names")) names = meta["stage_names"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(sidecar.string() + ": " + e.what());
    }
  }

  struct Row {
    std::string rel;
    int stage;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "path,stage") continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw DataError(manifest.string() + " row " + std::to_string(line_no) + ": expected 'path,stage'");
    }
    int stage = 0;
    try {
      std::size_t used = 0;
      stage = std::stoi(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(manifest.string() + " row " + std::to_string(line_no) + ": malformed stage '" +
                      line.substr(comma + 1) + "'");
    }
    rows.push_back({line.substr(0, comma), stage, line_no});
  }
  if (rows.empty()) throw DataError(manifest.string() + ": no rows");
  if (stages < 0) {
    for (const Row& r : rows) stages = std::max(stages, r.stage + 1);
  }
  if (stages < 2) throw DataError(manifest.string() + ": fewer than 2 stages");

  LabeledDataset data(stages, names);
  for (const Row& r : rows) {
    if (r.stage < 0 || r.stage >= stages) {
      throw DataError(manifest.string() + " row " + std::to_string(r.line) + ": stage " + std::to_string(r.stage) +
                      " outside [0, " + std::to_string(stages - 1) + "]");
    }
    const fs::path image_path = root / r.rel;
    if (!fs::exists(image_path)) {
      throw DataError(manifest.string() + " row " + std::to_string(r.line) + ": missing file " + r.rel);
    }
    Image image;
    try {
      image = read_pgm(image_path);
    } catch (const DataError& e) {
      throw DataError(manifest.string() + " row " + std::to_string(r.line) + ": " + e.what());
    }
    data.add(std::move(image), r.stage, r.rel);
  }
  return data;
}

}  // namespace stageseq
