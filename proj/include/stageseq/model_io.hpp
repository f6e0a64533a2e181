#pragma once

#include <filesystem>
#include <iosfwd>

#include "stageseq/training.hpp"

namespace stageseq {

// Binary model file, all integers and floats little-endian:
//
//   magic        "STSQ"
//   version      u16 (currently 1)
//   kind         u8  (0 baseline, 1 proposed)
//   config block u32 stages, image_height, image_width, channels,
//                    kernel_size, conv_count, conv_channels[conv_count],
//                    feature_dim, hidden_dim (0 for baseline),
//                    sequence_mode (0 cyclic, 1 nonregression), best_epoch
//                u64 seed, optimizer_steps
//   tensors      u32 count, then per tensor: u32 rank, u32 extents[rank],
//                f64 values (row-major)
//   history      u32 epochs, then per epoch: u32 epoch, f64 train_loss,
//                val_loss, train_accuracy, val_accuracy
//
// Tensor order is ModelParams::tensor_names(): conv kernels/bias per layer,
// dense weights/bias, vision head weights/bias, then (proposed only) LSTM
// input weights, recurrent weights, bias, LSTM head weights/bias.
inline constexpr char kModelMagic[4] = {'S', 'T', 'S', 'Q'};
inline constexpr std::uint16_t kModelFormatVersion = 1;

void write_model(std::ostream& out, const TrainedModel& model);
TrainedModel read_model(std::istream& in);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace stageseq
