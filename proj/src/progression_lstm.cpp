#include "stageseq/progression_lstm.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "stageseq/error.hpp"
#include "stageseq/ops.hpp"

namespace stageseq {

std::vector<Tensor*> LstmParams::tensors() {
  return {&input_weights, &recurrent_weights, &bias, &head_weights, &head_bias};
}

std::vector<const Tensor*> LstmParams::tensors() const {
  return {&input_weights, &recurrent_weights, &bias, &head_weights, &head_bias};
}

std::vector<std::string> LstmParams::tensor_names() const {
  return {"lstm.input_weights", "lstm.recurrent_weights", "lstm.bias", "lstm_head.weights", "lstm_head.bias"};
}

LstmParams init_lstm(std::size_t feature_dim, const LstmConfig& config, int stages, Rng& rng) {
  const std::size_t G = config.hidden_dim;
  if (G == 0 || feature_dim == 0) throw ArgumentError("LSTM dimensions must be positive");
  if (stages < 2) throw ArgumentError("LSTM head needs at least 2 stages");
  const auto K = static_cast<std::size_t>(stages);
  auto glorot = [&rng](Tensor& t, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.values()) v = dist(rng);
  };
  LstmParams p;
  p.input_weights = Tensor({4 * G, feature_dim});
  glorot(p.input_weights, feature_dim, G);
  p.recurrent_weights = Tensor({4 * G, G});
  glorot(p.recurrent_weights, G, G);
  p.bias = Tensor({4 * G});
  for (std::size_t j = G; j < 2 * G; ++j) p.bias[j] = 1.0;
  p.head_weights = Tensor({K, G});
  glorot(p.head_weights, G, K);
  p.head_bias = Tensor({K});
  return p;
}

LstmParams zeros_like(const LstmParams& params) {
  LstmParams z = params;
  for (Tensor* t : z.tensors()) t->fill(0.0);
  return z;
}

LstmState LstmState::zeros(std::size_t hidden_dim) { return {Tensor({hidden_dim}), Tensor({hidden_dim})}; }

namespace {

void check_lstm_shapes(const Tensor& input, const LstmState& prev, const LstmParams& params) {
  const std::size_t G = params.hidden_dim();
  if (params.input_weights.rank() != 2 || params.input_weights.dim(0) != 4 * G ||
      params.recurrent_weights.shape() != std::vector<std::size_t>{4 * G, G}) {
    throw DimensionError("LSTM weights do not match hidden size " + std::to_string(G));
  }
  if (input.size() != params.input_weights.dim(1)) {
    throw DimensionError("LSTM input has " + std::to_string(input.size()) + " features, weights expect " +
                         std::to_string(params.input_weights.dim(1)));
  }
  if (prev.h.size() != G || prev.c.size() != G) throw DimensionError("LSTM state size does not match hidden size");
}

// Activated gates [i f g o] for one step.
Tensor compute_gates(const Tensor& input, const Tensor& h, const LstmParams& params) {
  const std::size_t G = params.hidden_dim();
  Tensor gates({4 * G});
  affine_into(input.values(), params.input_weights, params.bias.values(), gates.values());
  std::vector<double> zero(4 * G, 0.0);
  Tensor recurrent({4 * G});
  affine_into(h.values(), params.recurrent_weights, zero, recurrent.values());
  for (std::size_t j = 0; j < 4 * G; ++j) {
    const double pre = gates[j] + recurrent[j];
    gates[j] = (j >= 2 * G && j < 3 * G) ? std::tanh(pre) : sigmoid(pre);
  }
  return gates;
}

}  // namespace

LstmState lstm_step(const Tensor& input, const LstmState& prev, const LstmParams& params) {
  check_lstm_shapes(input, prev, params);
  const std::size_t G = params.hidden_dim();
  const Tensor gates = compute_gates(input, prev.h, params);
  LstmState next = LstmState::zeros(G);
  for (std::size_t j = 0; j < G; ++j) {
    const double i = gates[j], f = gates[G + j], g = gates[2 * G + j], o = gates[3 * G + j];
    next.c[j] = f * prev.c[j] + i * g;
    next.h[j] = o * std::tanh(next.c[j]);
  }
  return next;
}

std::vector<Tensor> lstm_unroll(std::span<const Tensor> inputs, const LstmParams& params) {
  return lstm_forward(inputs, params).hidden;
}

LstmTrace lstm_forward(std::span<const Tensor> inputs, const LstmParams& params) {
  const std::size_t G = params.hidden_dim();
  LstmTrace trace;
  LstmState state = LstmState::zeros(G);
  for (const Tensor& z : inputs) {
    check_lstm_shapes(z, state, params);
    Tensor gates = compute_gates(z, state.h, params);
    Tensor c({G}), c_tanh({G}), h({G});
    for (std::size_t j = 0; j < G; ++j) {
      c[j] = gates[G + j] * state.c[j] + gates[j] * gates[2 * G + j];
      c_tanh[j] = std::tanh(c[j]);
      h[j] = gates[3 * G + j] * c_tanh[j];
    }
    state = {h, c};
    trace.inputs.push_back(z);
    trace.gates.push_back(std::move(gates));
    trace.cell.push_back(std::move(c));
    trace.cell_tanh.push_back(std::move(c_tanh));
    trace.hidden.push_back(std::move(h));
  }
  return trace;
}

Tensor lstm_head_logits(const Tensor& hidden, const LstmParams& params) {
  return affine(hidden, params.head_weights, params.head_bias);
}

std::vector<Tensor> lstm_head(std::span<const Tensor> hidden, const LstmParams& params) {
  std::vector<Tensor> rows;
  rows.reserve(hidden.size());
  for (const Tensor& h : hidden) rows.push_back(softmax(lstm_head_logits(h, params)));
  return rows;
}

double cross_entropy(std::span<const double> probabilities, StageLabel stage) {
  if (stage < 0 || static_cast<std::size_t>(stage) >= probabilities.size()) {
    throw ArgumentError("stage label " + std::to_string(stage) + " outside a " +
                        std::to_string(probabilities.size()) + "-way distribution");
  }
  return -std::log(std::max(probabilities[stage], kProbabilityFloor));
}

double sequence_loss(std::span<const Tensor> rows, std::span<const StageLabel> labels, std::span<const double> weights) {
  if (rows.size() != labels.size() || rows.size() != weights.size()) {
    throw DimensionError("sequence_loss: " + std::to_string(rows.size()) + " rows, " + std::to_string(labels.size()) +
                         " labels, " + std::to_string(weights.size()) + " weights");
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (weights[k] == 0.0) continue;
    loss += weights[k] * cross_entropy(rows[k], labels[k]);
  }
  return loss;
}

LossWeights LossWeights::ones(int stages) {
  return {std::vector<double>(stages, 1.0), std::vector<double>(stages, 1.0)};
}

void LossWeights::validate(int stages) const {
  if (static_cast<int>(alpha.size()) != stages || static_cast<int>(beta.size()) != stages) {
    throw DimensionError("loss weights must have one entry per stage");
  }
  bool any = false;
  for (double w : alpha) {
    if (!(w >= 0.0)) throw ArgumentError("loss weights must be nonnegative");
    any = any || w > 0.0;
  }
  for (double w : beta) {
    if (!(w >= 0.0)) throw ArgumentError("loss weights must be nonnegative");
    any = any || w > 0.0;
  }
  if (!any) throw ArgumentError("loss weights are all zero");
}

double total_loss(std::span<const Tensor> lstm_rows, std::span<const Tensor> vision_rows,
                  std::span<const StageLabel> labels, const LossWeights& weights) {
  return sequence_loss(lstm_rows, labels, weights.alpha) + sequence_loss(vision_rows, labels, weights.beta);
}

Tensor cross_entropy_logit_grad(const Tensor& probabilities, StageLabel stage, double weight) {
  if (stage < 0 || static_cast<std::size_t>(stage) >= probabilities.size()) {
    throw ArgumentError("stage label " + std::to_string(stage) + " out of range");
  }
  Tensor grad = probabilities;
  grad[static_cast<std::size_t>(stage)] -= 1.0;
  for (double& v : grad.values()) v *= weight;
  return grad;
}

std::vector<Tensor> lstm_backward(const LstmTrace& trace, std::span<const Tensor> grad_head_logits,
                                  const LstmParams& params, LstmParams& grads) {
  if (!trace.ready()) throw StateError("lstm_backward called without a cached forward pass");
  const std::size_t steps = trace.inputs.size();
  if (grad_head_logits.size() != steps) throw DimensionError("lstm_backward: one logit gradient per step required");
  const std::size_t G = params.hidden_dim();

  const std::size_t C = trace.inputs[0].size();
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const RowMatrix>;
  const auto rows = static_cast<Eigen::Index>(steps);
  const auto gates_n = static_cast<Eigen::Index>(4 * G);
  const auto hidden_n = static_cast<Eigen::Index>(G);
  const auto input_n = static_cast<Eigen::Index>(C);

  // Pre-activation gradients for every step; weight and input gradients are
  // then single matrix products over time.
  RowMatrix dpre(rows, gates_n), z(rows, input_n), h_prev = RowMatrix::Zero(rows, hidden_n);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hidden_n), dc_next = Eigen::VectorXd::Zero(hidden_n);
  Eigen::VectorXd dh(hidden_n);
  ConstMap w_rec(params.recurrent_weights.data(), gates_n, hidden_n);
  const Tensor zero_state({G});
  for (std::size_t t = steps; t-- > 0;) {
    const auto row = static_cast<Eigen::Index>(t);
    dh = dh_next;
    if (!grad_head_logits[t].empty()) {
      affine_weight_grad_accumulate(grad_head_logits[t].values(), trace.hidden[t].values(), grads.head_weights,
                                    grads.head_bias.values());
      affine_transpose_accumulate(grad_head_logits[t].values(), params.head_weights, {dh.data(), G});
    }
    const Tensor& gates = trace.gates[t];
    const Tensor& c_prev = t > 0 ? trace.cell[t - 1] : zero_state;
    double* d = dpre.row(row).data();
    for (std::size_t j = 0; j < G; ++j) {
      const double i = gates[j], f = gates[G + j], g = gates[2 * G + j], o = gates[3 * G + j];
      const double tc = trace.cell_tanh[t][j];
      const double dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
      d[j] = dc * g * i * (1.0 - i);
      d[G + j] = dc * c_prev[j] * f * (1.0 - f);
      d[2 * G + j] = dc * i * (1.0 - g * g);
      d[3 * G + j] = dh[j] * tc * o * (1.0 - o);
      dc_next[j] = dc * f;
    }
    if (trace.inputs[t].size() != C) throw DimensionError("lstm_backward: inputs differ in size");
    std::copy_n(trace.inputs[t].data(), C, z.row(row).data());
    if (t > 0) std::copy_n(trace.hidden[t - 1].data(), G, h_prev.row(row).data());
    dh_next.noalias() = w_rec.transpose() * dpre.row(row).transpose();
  }

  Eigen::Map<RowMatrix>(grads.input_weights.data(), gates_n, input_n).noalias() += dpre.transpose() * z;
  Eigen::Map<RowMatrix>(grads.recurrent_weights.data(), gates_n, hidden_n).noalias() += dpre.transpose() * h_prev;
  Eigen::Map<Eigen::RowVectorXd>(grads.bias.data(), gates_n) += dpre.colwise().sum();
  const RowMatrix dz = dpre * ConstMap(params.input_weights.data(), gates_n, input_n);
  std::vector<Tensor> grad_inputs;
  grad_inputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* src = dz.row(static_cast<Eigen::Index>(t)).data();
    grad_inputs.emplace_back(std::vector<std::size_t>{C}, std::vector<double>(src, src + C));
  }
  return grad_inputs;
}

}  // namespace stageseq
