#include "stageseq/model.hpp"

#include <string>

#include "stageseq/error.hpp"
#include "stageseq/ops.hpp"
#include "stageseq/sequence_sampler.hpp"

namespace stageseq {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::baseline ? "baseline" : "proposed"; }
std::string_view to_string(Head head) { return head == Head::vision ? "vision" : "lstm"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "baseline") return ModelKind::baseline;
  if (text == "proposed") return ModelKind::proposed;
  throw ArgumentError("unknown model kind '" + std::string(text) + "'");
}

Head parse_head(std::string_view text) {
  if (text == "vision") return Head::vision;
  if (text == "lstm") return Head::lstm;
  throw ArgumentError("unknown head '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (stages < 2) throw ArgumentError("stage count must be at least 2");
  encoder.validate(stages);
  if (kind == ModelKind::proposed && lstm.hidden_dim == 0) throw ArgumentError("LSTM hidden size must be positive");
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out = encoder.tensors();
  if (config.kind == ModelKind::proposed) {
    for (Tensor* t : lstm.tensors()) out.push_back(t);
  }
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out = encoder.tensors();
  if (config.kind == ModelKind::proposed) {
    for (const Tensor* t : lstm.tensors()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> out = encoder.tensor_names();
  if (config.kind == ModelKind::proposed) {
    for (std::string& n : lstm.tensor_names()) out.push_back(std::move(n));
  }
  return out;
}

bool ModelParams::all_finite() const {
  for (const Tensor* t : tensors()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

ModelParams init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams model;
  model.config = config;
  model.encoder = init_encoder(config.encoder, config.stages, rng);
  if (config.kind == ModelKind::proposed) {
    model.lstm = init_lstm(config.encoder.feature_dim, config.lstm, config.stages, rng);
  }
  return model;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for (Tensor* t : z.tensors()) t->fill(0.0);
  return z;
}

void accumulate(ModelParams& acc, const ModelParams& other, double scale) {
  auto dst = acc.tensors();
  auto src = other.tensors();
  if (dst.size() != src.size()) throw DimensionError("accumulate: parameter sets differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require_same_shape(*dst[i], *src[i], "accumulate");
    std::span<double> d = dst[i]->values();
    std::span<const double> s = src[i]->values();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += scale * s[j];
  }
}

SequenceForward forward_sequence(const ModelParams& model, std::span<const Image> images) {
  if (model.config.kind != ModelKind::proposed) throw ArgumentError("sequence forward needs a proposed model");
  if (images.size() != static_cast<std::size_t>(model.config.stages)) {
    throw DimensionError("sequence has " + std::to_string(images.size()) + " images, model expects " +
                         std::to_string(model.config.stages));
  }
  SequenceForward fwd;
  std::vector<Tensor> features;
  for (const Image& image : images) {
    fwd.encoder.push_back(encode_traced(image, model.encoder, model.config.encoder));
    features.push_back(fwd.encoder.back().features);
    fwd.vision_probs.push_back(vision_head(features.back(), model.encoder));
  }
  fwd.lstm = lstm_forward(features, model.lstm);
  fwd.lstm_probs = lstm_head(fwd.lstm.hidden, model.lstm);
  return fwd;
}

double sequence_loss_and_grad(const ModelParams& model, std::span<const Image> images,
                              std::span<const StageLabel> labels, const LossWeights& weights, ModelParams* grads,
                              double scale, SequenceForward* forward_out) {
  SequenceForward fwd = forward_sequence(model, images);
  const double loss = total_loss(fwd.lstm_probs, fwd.vision_probs, labels, weights);
  if (grads) {
    const std::size_t K = images.size();
    std::vector<Tensor> lstm_logit_grads, vision_logit_grads;
    for (std::size_t k = 0; k < K; ++k) {
      lstm_logit_grads.push_back(cross_entropy_logit_grad(fwd.lstm_probs[k], labels[k], scale * weights.alpha[k]));
      vision_logit_grads.push_back(cross_entropy_logit_grad(fwd.vision_probs[k], labels[k], scale * weights.beta[k]));
    }
    const std::vector<Tensor> grad_features = lstm_backward(fwd.lstm, lstm_logit_grads, model.lstm, grads->lstm);
    encoder_backward_sequence(fwd.encoder, grad_features, vision_logit_grads, model.encoder, grads->encoder);
  }
  if (forward_out) *forward_out = std::move(fwd);
  return loss;
}

double image_loss_and_grad(const ModelParams& model, const Image& image, StageLabel label, ModelParams* grads,
                           double scale, Tensor* probs_out) {
  const EncoderTrace trace = encode_traced(image, model.encoder, model.config.encoder);
  Tensor probs = vision_head(trace.features, model.encoder);
  const double loss = cross_entropy(probs, label);
  if (grads) {
    Tensor grad_z(trace.features.shape());
    vision_head_backward(trace.features, cross_entropy_logit_grad(probs, label, scale), model.encoder,
                         grads->encoder, grad_z);
    encoder_backward(trace, grad_z, model.encoder, grads->encoder);
  }
  if (probs_out) *probs_out = std::move(probs);
  return loss;
}

Tensor predict_probabilities(const ModelParams& model, const Image& image, Head head) {
  if (model.config.kind == ModelKind::baseline) {
    if (head == Head::lstm) throw ArgumentError("the baseline model has no LSTM head");
    return vision_head(encode(image, model.encoder, model.config.encoder), model.encoder);
  }
  const SequenceSample repeated = test_sequence(image, model.config.stages);
  SequenceForward fwd = forward_sequence(model, repeated.images);
  return head == Head::vision ? std::move(fwd.vision_probs.front()) : std::move(fwd.lstm_probs.front());
}

StageLabel predict_stage(const ModelParams& model, const Image& image, Head head) {
  return static_cast<StageLabel>(argmax(predict_probabilities(model, image, head).values()));
}

}  // namespace stageseq
