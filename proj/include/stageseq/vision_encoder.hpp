#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stageseq/image.hpp"
#include "stageseq/rng.hpp"
#include "stageseq/tensor.hpp"

namespace stageseq {

// Compact CNN trunk: (conv k×k -> relu -> maxpool2) per entry of
// conv_channels, then flatten -> dense to feature_dim -> relu.
struct EncoderConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t channels = 1;
  std::size_t feature_dim = 64;
  std::vector<std::size_t> conv_channels{8, 16};
  std::size_t kernel_size = 3;

  // Throws DimensionError/ArgumentError if the spatial extent collapses before
  // the last pool or feature_dim < stages.
  void validate(int stages) const;
  // Length of the flattened map fed to the dense layer.
  std::size_t flattened_dim() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ConvLayer {
  Tensor kernels;  // k×k×c_in×c_out
  Tensor bias;     // c_out
};

// Trunk parameters plus the auxiliary vision head (θ_v, K×C).
struct EncoderParams {
  std::vector<ConvLayer> conv;
  Tensor dense_weights;  // C×flattened
  Tensor dense_bias;     // C
  Tensor head_weights;   // K×C
  Tensor head_bias;      // K

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
};

// Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases.
EncoderParams init_encoder(const EncoderConfig& config, int stages, Rng& rng);
EncoderParams zeros_like(const EncoderParams& params);

// Forward intermediates needed by encoder_backward.
struct EncoderTrace {
  std::vector<Tensor> layer_input;                      // input to each conv layer
  std::vector<Tensor> activation;                       // relu(conv) per layer
  std::vector<std::vector<std::size_t>> pool_source;    // maxpool argmax per layer
  std::vector<std::size_t> pooled_shape;                // shape of the final pooled map
  Tensor flat;                                          // flattened final map
  Tensor features;                                      // z = relu(dense)

  bool ready() const noexcept { return !layer_input.empty() && !features.empty(); }
};

/// Feature vector z (length C) of one image.
Tensor encode(const Image& image, const EncoderParams& params, const EncoderConfig& config);
EncoderTrace encode_traced(const Image& image, const EncoderParams& params, const EncoderConfig& config);

/// Row k is encode(images[k]) with the same parameters at every position.
std::vector<Tensor> encode_sequence(std::span<const Image> images, const EncoderParams& params,
                                    const EncoderConfig& config);

Tensor vision_logits(const Tensor& features, const EncoderParams& params);
/// softmax(θ_v·z + b).
Tensor vision_head(const Tensor& features, const EncoderParams& params);

// Accumulates head parameter gradients for dL/dlogits and adds the feature
// gradient θ_vᵀ·g into `grad_features`.
void vision_head_backward(const Tensor& features, const Tensor& grad_logits, const EncoderParams& params,
                          EncoderParams& grads, Tensor& grad_features);

// Accumulates trunk parameter gradients for dL/dz. Throws StateError when the
// trace holds no forward pass.
void encoder_backward(const EncoderTrace& trace, const Tensor& grad_features, const EncoderParams& params,
                      EncoderParams& grads);

// Sequence form: per position, the vision head gradient (dL/dlogits, may be
// empty to skip) and the feature gradient arriving from downstream. Shared
// parameters accumulate over all positions.
void encoder_backward_sequence(std::span<const EncoderTrace> traces, std::span<const Tensor> grad_features,
                               std::span<const Tensor> grad_head_logits, const EncoderParams& params,
                               EncoderParams& grads);

}  // namespace stageseq
