#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stageseq/image.hpp"
#include "stageseq/progression_lstm.hpp"
#include "stageseq/rng.hpp"
#include "stageseq/vision_encoder.hpp"

namespace stageseq {

enum class ModelKind : std::uint8_t { baseline = 0, proposed = 1 };
enum class Head { vision, lstm };

std::string_view to_string(ModelKind kind);
std::string_view to_string(Head head);
ModelKind parse_model_kind(std::string_view text);
Head parse_head(std::string_view text);

struct ModelConfig {
  ModelKind kind = ModelKind::proposed;
  int stages = 4;
  EncoderConfig encoder;
  LstmConfig lstm;

  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The baseline is the encoder and vision head alone; the proposed model adds
// the LSTM and its head on top of the same encoder. Baseline models keep
// `lstm` empty.
struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  LstmParams lstm;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
  bool all_finite() const;
};

ModelParams init_model(const ModelConfig& config, Rng& rng);
ModelParams zeros_like(const ModelParams& params);

// acc += scale * other, tensor by tensor.
void accumulate(ModelParams& acc, const ModelParams& other, double scale = 1.0);

struct SequenceForward {
  std::vector<EncoderTrace> encoder;
  LstmTrace lstm;
  std::vector<Tensor> vision_probs;  // ŷ_v rows
  std::vector<Tensor> lstm_probs;    // ŷ_l rows
};

SequenceForward forward_sequence(const ModelParams& model, std::span<const Image> images);

// Total loss of one labeled sequence. When `grads` is non-null, adds
// scale·dL/dθ into it. The forward pass is moved into `forward_out` when
// non-null.
double sequence_loss_and_grad(const ModelParams& model, std::span<const Image> images,
                              std::span<const StageLabel> labels, const LossWeights& weights, ModelParams* grads,
                              double scale = 1.0, SequenceForward* forward_out = nullptr);

// Cross-entropy of the vision head on one image (baseline training).
double image_loss_and_grad(const ModelParams& model, const Image& image, StageLabel label, ModelParams* grads,
                           double scale = 1.0, Tensor* probs_out = nullptr);

// Test-phase class distribution for a single image. Proposed models see the
// image repeated K times and report the first position of the chosen head;
// baseline models apply the vision head directly. Throws ArgumentError for
// the LSTM head on a baseline model.
Tensor predict_probabilities(const ModelParams& model, const Image& image, Head head);
StageLabel predict_stage(const ModelParams& model, const Image& image, Head head);

}  // namespace stageseq
