#include "stageseq/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "stageseq/error.hpp"

namespace stageseq {

namespace {

template <typename UInt>
void put_le(std::ostream& out, UInt value) {
  unsigned char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(UInt));
}

void put_u32(std::ostream& out, std::size_t value) {
  if (value > 0xffffffffu) throw ArgumentError("model field exceeds 32 bits");
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(value));
}

void put_f64(std::ostream& out, double value) { put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(value)); }

template <typename UInt>
UInt get_le(std::istream& in) {
  unsigned char bytes[sizeof(UInt)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(UInt));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(UInt))) throw DataError("model file is truncated");
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
  return value;
}

std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

// Guards against absurd sizes in corrupt files before allocating.
std::uint32_t get_bounded(std::istream& in, std::uint32_t limit, const char* what) {
  const std::uint32_t v = get_u32(in);
  if (v > limit) throw DataError(std::string("model file: implausible ") + what + " " + std::to_string(v));
  return v;
}

}  // namespace

void write_model(std::ostream& out, const TrainedModel& model) {
  const ModelConfig& cfg = model.params.config;
  out.write(kModelMagic, 4);
  put_le<std::uint16_t>(out, kModelFormatVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.kind));
  put_u32(out, static_cast<std::size_t>(cfg.stages));
  put_u32(out, cfg.encoder.image_height);
  put_u32(out, cfg.encoder.image_width);
  put_u32(out, cfg.encoder.channels);
  put_u32(out, cfg.encoder.kernel_size);
  put_u32(out, cfg.encoder.conv_channels.size());
  for (std::size_t c : cfg.encoder.conv_channels) put_u32(out, c);
  put_u32(out, cfg.encoder.feature_dim);
  put_u32(out, cfg.kind == ModelKind::proposed ? cfg.lstm.hidden_dim : 0);
  put_u32(out, model.sequence_mode == SequenceMode::cyclic ? 0 : 1);
  put_u32(out, static_cast<std::size_t>(model.best_epoch));
  put_le<std::uint64_t>(out, model.seed);
  put_le<std::uint64_t>(out, model.optimizer_steps);

  const auto tensors = model.params.tensors();
  put_u32(out, tensors.size());
  for (const Tensor* t : tensors) {
    put_u32(out, t->rank());
    for (std::size_t extent : t->shape()) put_u32(out, extent);
    for (double v : t->values()) put_f64(out, v);
  }
  put_u32(out, model.history.size());
  for (const EpochRecord& r : model.history) {
    put_u32(out, static_cast<std::size_t>(r.epoch));
    put_f64(out, r.train_loss);
    put_f64(out, r.val_loss);
    put_f64(out, r.train_accuracy);
    put_f64(out, r.val_accuracy);
  }
  if (!out) throw IoError("failed writing model");
}

TrainedModel read_model(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kModelMagic, 4) != 0) throw DataError("not a model file (bad magic)");
  const auto version = get_le<std::uint16_t>(in);
  if (version != kModelFormatVersion) throw DataError("unsupported model format version " + std::to_string(version));
  const auto kind_byte = get_le<std::uint8_t>(in);
  if (kind_byte > 1) throw DataError("model file: unknown model kind " + std::to_string(kind_byte));

  TrainedModel model;
  ModelConfig& cfg = model.params.config;
  cfg.kind = static_cast<ModelKind>(kind_byte);
  cfg.stages = static_cast<int>(get_bounded(in, 1024, "stage count"));
  cfg.encoder.image_height = get_bounded(in, 1 << 16, "image height");
  cfg.encoder.image_width = get_bounded(in, 1 << 16, "image width");
  cfg.encoder.channels = get_bounded(in, 64, "channel count");
  cfg.encoder.kernel_size = get_bounded(in, 64, "kernel size");
  const std::uint32_t conv_count = get_bounded(in, 64, "conv layer count");
  cfg.encoder.conv_channels.clear();
  for (std::uint32_t i = 0; i < conv_count; ++i) cfg.encoder.conv_channels.push_back(get_bounded(in, 1 << 16, "conv width"));
  cfg.encoder.feature_dim = get_bounded(in, 1 << 20, "feature size");
  const std::uint32_t hidden = get_bounded(in, 1 << 20, "hidden size");
  if (cfg.kind == ModelKind::proposed) cfg.lstm.hidden_dim = hidden;
  const std::uint32_t mode = get_bounded(in, 1, "sequence mode");
  model.sequence_mode = mode == 0 ? SequenceMode::cyclic : SequenceMode::nonregression;
  model.best_epoch = static_cast<int>(get_u32(in));
  model.seed = get_le<std::uint64_t>(in);
  model.optimizer_steps = get_le<std::uint64_t>(in);
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw DataError(std::string("model file: invalid configuration: ") + e.what());
  }

  // Expected shapes come from a zero-filled model of the same configuration.
  Rng unused = make_rng(0);
  model.params = init_model(cfg, unused);
  auto tensors = model.params.tensors();
  const std::uint32_t count = get_u32(in);
  if (count != tensors.size()) {
    throw DataError("model file has " + std::to_string(count) + " tensors, configuration implies " +
                    std::to_string(tensors.size()));
  }
  const auto names = model.params.tensor_names();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::uint32_t rank = get_bounded(in, 8, "tensor rank");
    std::vector<std::size_t> shape(rank);
    for (std::size_t& extent : shape) extent = get_u32(in);
    if (shape != tensors[i]->shape()) {
      throw DataError("model file: tensor " + names[i] + " has shape " + shape_string(shape) + ", expected " +
                      shape_string(tensors[i]->shape()));
    }
    for (double& v : tensors[i]->values()) v = get_f64(in);
  }
  const std::uint32_t epochs = get_bounded(in, 1 << 20, "history length");
  for (std::uint32_t e = 0; e < epochs; ++e) {
    EpochRecord r;
    r.epoch = static_cast<int>(get_u32(in));
    r.train_loss = get_f64(in);
    r.val_loss = get_f64(in);
    r.train_accuracy = get_f64(in);
    r.val_accuracy = get_f64(in);
    model.history.push_back(r);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("model file has trailing bytes");
  if (!model.params.all_finite()) throw DataError("model file contains non-finite parameters");
  return model;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_model(out, model);
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  return read_model(in);
}

}  // namespace stageseq
