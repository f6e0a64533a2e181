#include "stageseq/vision_encoder.hpp"

#include <cmath>

#include "stageseq/error.hpp"
#include "stageseq/ops.hpp"

namespace stageseq {

void EncoderConfig::validate(int stages) const {
  if (image_height == 0 || image_width == 0 || channels == 0) throw DimensionError("encoder: empty image geometry");
  if (conv_channels.empty()) throw ArgumentError("encoder needs at least one conv block");
  if (kernel_size == 0) throw ArgumentError("encoder kernel size must be positive");
  if (feature_dim < static_cast<std::size_t>(stages)) {
    throw ArgumentError("feature_dim " + std::to_string(feature_dim) + " is smaller than the stage count " +
                        std::to_string(stages));
  }
  flattened_dim();
}

std::size_t EncoderConfig::flattened_dim() const {
  std::size_t h = image_height;
  std::size_t w = image_width;
  for (std::size_t c : conv_channels) {
    if (c == 0) throw ArgumentError("conv channel counts must be positive");
    if (kernel_size > h || kernel_size > w) {
      throw DimensionError("encoder: " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                           " input collapses before every conv block runs");
    }
    h = (h - kernel_size + 1) / 2;
    w = (w - kernel_size + 1) / 2;
    if (h == 0 || w == 0) {
      throw DimensionError("encoder: " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                           " input collapses before the last pool");
    }
  }
  return h * w * conv_channels.back();
}

std::vector<Tensor*> EncoderParams::tensors() {
  std::vector<Tensor*> out;
  for (ConvLayer& layer : conv) {
    out.push_back(&layer.kernels);
    out.push_back(&layer.bias);
  }
  out.insert(out.end(), {&dense_weights, &dense_bias, &head_weights, &head_bias});
  return out;
}

std::vector<const Tensor*> EncoderParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const ConvLayer& layer : conv) {
    out.push_back(&layer.kernels);
    out.push_back(&layer.bias);
  }
  out.insert(out.end(), {&dense_weights, &dense_bias, &head_weights, &head_bias});
  return out;
}

std::vector<std::string> EncoderParams::tensor_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < conv.size(); ++l) {
    names.push_back("encoder.conv" + std::to_string(l + 1) + ".kernels");
    names.push_back("encoder.conv" + std::to_string(l + 1) + ".bias");
  }
  names.insert(names.end(), {"encoder.dense.weights", "encoder.dense.bias", "vision_head.weights", "vision_head.bias"});
  return names;
}

namespace {

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& config, int stages, Rng& rng) {
  config.validate(stages);
  EncoderParams p;
  const std::size_t k = config.kernel_size;
  std::size_t in_c = config.channels;
  for (std::size_t out_c : config.conv_channels) {
    ConvLayer layer{Tensor({k, k, in_c, out_c}), Tensor({out_c})};
    glorot_fill(layer.kernels, k * k * in_c, k * k * out_c, rng);
    p.conv.push_back(std::move(layer));
    in_c = out_c;
  }
  const std::size_t flat = config.flattened_dim();
  p.dense_weights = Tensor({config.feature_dim, flat});
  glorot_fill(p.dense_weights, flat, config.feature_dim, rng);
  p.dense_bias = Tensor({config.feature_dim});
  const auto K = static_cast<std::size_t>(stages);
  p.head_weights = Tensor({K, config.feature_dim});
  glorot_fill(p.head_weights, config.feature_dim, K, rng);
  p.head_bias = Tensor({K});
  return p;
}

EncoderParams zeros_like(const EncoderParams& params) {
  EncoderParams z = params;
  for (Tensor* t : z.tensors()) t->fill(0.0);
  return z;
}

EncoderTrace encode_traced(const Image& image, const EncoderParams& params, const EncoderConfig& config) {
  if (image.height != config.image_height || image.width != config.image_width || image.channels != config.channels) {
    throw DimensionError("encode: image is " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                         std::to_string(image.channels) + ", encoder expects " + std::to_string(config.image_height) +
                         "x" + std::to_string(config.image_width) + "x" + std::to_string(config.channels));
  }
  if (params.conv.size() != config.conv_channels.size()) {
    throw DimensionError("encode: parameter layer count does not match the encoder config");
  }
  EncoderTrace trace;
  Tensor current = image.as_tensor();
  for (const ConvLayer& layer : params.conv) {
    Tensor act = conv2d(current, layer.kernels, layer.bias);
    for (double& v : act.values()) v = v > 0.0 ? v : 0.0;
    PoolResult pooled = maxpool2(act);
    trace.layer_input.push_back(std::move(current));
    trace.activation.push_back(std::move(act));
    trace.pool_source.push_back(std::move(pooled.source_index));
    current = std::move(pooled.output);
  }
  trace.pooled_shape = current.shape();
  trace.flat = Tensor({current.size()}, std::vector<double>(current.values().begin(), current.values().end()));
  if (params.dense_weights.rank() != 2 || params.dense_weights.dim(1) != trace.flat.size()) {
    throw DimensionError("encode: dense weights " + shape_string(params.dense_weights.shape()) +
                         " do not accept a flattened map of " + std::to_string(trace.flat.size()));
  }
  trace.features = affine(trace.flat, params.dense_weights, params.dense_bias);
  for (double& v : trace.features.values()) v = v > 0.0 ? v : 0.0;
  return trace;
}

Tensor encode(const Image& image, const EncoderParams& params, const EncoderConfig& config) {
  return encode_traced(image, params, config).features;
}

std::vector<Tensor> encode_sequence(std::span<const Image> images, const EncoderParams& params,
                                    const EncoderConfig& config) {
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  for (const Image& image : images) rows.push_back(encode(image, params, config));
  return rows;
}

Tensor vision_logits(const Tensor& features, const EncoderParams& params) {
  return affine(features, params.head_weights, params.head_bias);
}

Tensor vision_head(const Tensor& features, const EncoderParams& params) {
  return softmax(vision_logits(features, params));
}

void vision_head_backward(const Tensor& features, const Tensor& grad_logits, const EncoderParams& params,
                          EncoderParams& grads, Tensor& grad_features) {
  require_same_shape(grad_features, features, "vision_head_backward feature gradient");
  if (grad_logits.size() != params.head_bias.size()) throw DimensionError("vision_head_backward: logit gradient size");
  affine_weight_grad_accumulate(grad_logits.values(), features.values(), grads.head_weights,
                                grads.head_bias.values());
  affine_transpose_accumulate(grad_logits.values(), params.head_weights, grad_features.values());
}

void encoder_backward(const EncoderTrace& trace, const Tensor& grad_features, const EncoderParams& params,
                      EncoderParams& grads) {
  if (!trace.ready()) throw StateError("encoder_backward called without a cached forward pass");
  require_same_shape(grad_features, trace.features, "encoder_backward feature gradient");

  Tensor grad_dense(trace.features.shape());
  for (std::size_t i = 0; i < grad_dense.size(); ++i) {
    grad_dense[i] = trace.features[i] > 0.0 ? grad_features[i] : 0.0;
  }
  affine_weight_grad_accumulate(grad_dense.values(), trace.flat.values(), grads.dense_weights,
                                grads.dense_bias.values());
  Tensor grad_map(trace.pooled_shape);
  affine_transpose_accumulate(grad_dense.values(), params.dense_weights, grad_map.values());

  for (std::size_t l = params.conv.size(); l-- > 0;) {
    const Tensor& act = trace.activation[l];
    Tensor grad_act = maxpool2_backward(grad_map, trace.pool_source[l], act.shape());
    for (std::size_t i = 0; i < grad_act.size(); ++i) {
      if (act[i] <= 0.0) grad_act[i] = 0.0;
    }
    if (l == 0) {
      conv2d_backward(trace.layer_input[l], params.conv[l].kernels, grad_act, grads.conv[l].kernels,
                      grads.conv[l].bias, nullptr);
    } else {
      Tensor grad_input(trace.layer_input[l].shape());
      conv2d_backward(trace.layer_input[l], params.conv[l].kernels, grad_act, grads.conv[l].kernels,
                      grads.conv[l].bias, &grad_input);
      grad_map = std::move(grad_input);
    }
  }
}

void encoder_backward_sequence(std::span<const EncoderTrace> traces, std::span<const Tensor> grad_features,
                               std::span<const Tensor> grad_head_logits, const EncoderParams& params,
                               EncoderParams& grads) {
  if (grad_features.size() != traces.size() || (!grad_head_logits.empty() && grad_head_logits.size() != traces.size())) {
    throw DimensionError("encoder_backward_sequence: gradient rows do not match the sequence length");
  }
  for (std::size_t k = 0; k < traces.size(); ++k) {
    if (!traces[k].ready()) throw StateError("encoder_backward_sequence: position " + std::to_string(k) + " has no trace");
    Tensor grad_z = grad_features[k];
    if (!grad_head_logits.empty() && !grad_head_logits[k].empty()) {
      vision_head_backward(traces[k].features, grad_head_logits[k], params, grads, grad_z);
    }
    encoder_backward(traces[k], grad_z, params, grads);
  }
}

}  // namespace stageseq
