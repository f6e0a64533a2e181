#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stageseq/tensor.hpp"

namespace stageseq {

// SGD with Nesterov momentum and inverse-time learning-rate decay:
//   lr_t = lr0 / (1 + decay * t)
//   v <- m*v - lr_t*g
//   p <- p + m*v - lr_t*g
// where t is the number of updates applied before this one.
struct OptimizerState {
  double learning_rate0 = 0.001;
  double decay = 1e-6;
  double momentum = 0.9;
  std::uint64_t update_count = 0;
  std::vector<Tensor> velocity;

  // Zero velocity shaped like `params`; validates the hyperparameters.
  static OptimizerState create(std::span<const Tensor* const> params, double learning_rate0, double decay,
                               double momentum);

  double current_learning_rate() const noexcept;
};

void sgd_nesterov_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, OptimizerState& state);

}  // namespace stageseq
