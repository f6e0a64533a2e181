#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stageseq/image.hpp"
#include "stageseq/rng.hpp"
#include "stageseq/tensor.hpp"

namespace stageseq {

struct LstmConfig {
  std::size_t hidden_dim = 64;

  friend bool operator==(const LstmConfig&, const LstmConfig&) = default;
};

// Single-layer LSTM with a per-step softmax head. Gate blocks are stacked in
// the order input, forget, candidate, output: rows [0,G) of input_weights are
// W_i, rows [G,2G) are W_f, and so on.
struct LstmParams {
  Tensor input_weights;      // 4G×C
  Tensor recurrent_weights;  // 4G×G
  Tensor bias;               // 4G
  Tensor head_weights;       // K×G (θ_l)
  Tensor head_bias;          // K

  std::size_t hidden_dim() const { return bias.size() / 4; }

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
};

// Glorot-uniform weights, forget-gate bias 1, other biases 0.
LstmParams init_lstm(std::size_t feature_dim, const LstmConfig& config, int stages, Rng& rng);
LstmParams zeros_like(const LstmParams& params);

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t hidden_dim);
};

/// One recurrence step:
///   i = σ(W_i z + U_i h + b_i)   f = σ(W_f z + U_f h + b_f)
///   g = tanh(W_g z + U_g h + b_g) o = σ(W_o z + U_o h + b_o)
///   c' = f⊙c + i⊙g               h' = o⊙tanh(c')
LstmState lstm_step(const Tensor& input, const LstmState& prev, const LstmParams& params);

/// Hidden states h^{S_0..S_{K-1}} starting from h = c = 0.
std::vector<Tensor> lstm_unroll(std::span<const Tensor> inputs, const LstmParams& params);

Tensor lstm_head_logits(const Tensor& hidden, const LstmParams& params);
/// Row k is softmax(θ_l·h_k + b), each row independent.
std::vector<Tensor> lstm_head(std::span<const Tensor> hidden, const LstmParams& params);

// Probabilities below this are clamped before taking the log.
inline constexpr double kProbabilityFloor = 1e-12;

/// −log p[stage] with p clamped to kProbabilityFloor.
double cross_entropy(std::span<const double> probabilities, StageLabel stage);
inline double cross_entropy(const Tensor& probabilities, StageLabel stage) {
  return cross_entropy(probabilities.values(), stage);
}

/// Σ_k weights[k]·cross_entropy(rows[k], labels[k]).
double sequence_loss(std::span<const Tensor> rows, std::span<const StageLabel> labels, std::span<const double> weights);

struct LossWeights {
  std::vector<double> alpha;  // LSTM head, one per position
  std::vector<double> beta;   // vision head, one per position

  static LossWeights ones(int stages);
  void validate(int stages) const;
};

/// sequence_loss(lstm rows, alpha) + sequence_loss(vision rows, beta).
double total_loss(std::span<const Tensor> lstm_rows, std::span<const Tensor> vision_rows,
                  std::span<const StageLabel> labels, const LossWeights& weights);

// dL/dlogits of weight·cross_entropy(softmax(logits), stage) given the
// softmax output: weight·(p − onehot).
Tensor cross_entropy_logit_grad(const Tensor& probabilities, StageLabel stage, double weight);

// Per-step forward intermediates for lstm_backward.
struct LstmTrace {
  std::vector<Tensor> inputs;      // z_k
  std::vector<Tensor> gates;       // activated [i f g o], length 4G
  std::vector<Tensor> cell;        // c_k
  std::vector<Tensor> cell_tanh;   // tanh(c_k)
  std::vector<Tensor> hidden;      // h_k

  bool ready() const noexcept { return !inputs.empty() && hidden.size() == inputs.size(); }
};

LstmTrace lstm_forward(std::span<const Tensor> inputs, const LstmParams& params);

// Backpropagation through time. `grad_head_logits[k]` is dL/dlogits of the
// LSTM head at step k. Accumulates into `grads` and returns dL/dz_k for every
// step. Throws StateError if the trace is incomplete.
std::vector<Tensor> lstm_backward(const LstmTrace& trace, std::span<const Tensor> grad_head_logits,
                                  const LstmParams& params, LstmParams& grads);

}  // namespace stageseq
