#include "stageseq/optimizer.hpp"

#include <string>

#include "stageseq/error.hpp"

namespace stageseq {

OptimizerState OptimizerState::create(std::span<const Tensor* const> params, double learning_rate0, double decay,
                                      double momentum) {
  if (!(learning_rate0 >= 0.0)) throw ArgumentError("learning rate must be nonnegative");
  if (!(decay >= 0.0)) throw ArgumentError("learning-rate decay must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
  OptimizerState state;
  state.learning_rate0 = learning_rate0;
  state.decay = decay;
  state.momentum = momentum;
  state.velocity.reserve(params.size());
  for (const Tensor* p : params) state.velocity.emplace_back(p->shape());
  return state;
}

double OptimizerState::current_learning_rate() const noexcept {
  return learning_rate0 / (1.0 + decay * static_cast<double>(update_count));
}

void sgd_nesterov_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw DimensionError("optimizer: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " + std::to_string(state.velocity.size()) +
                         " velocity buffers");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*grads[i], *params[i], "optimizer gradient");
    require_same_shape(state.velocity[i], *params[i], "optimizer velocity");
  }
  const double lr = state.current_learning_rate();
  const double m = state.momentum;
  ++state.update_count;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> p = params[i]->values();
    std::span<const double> g = grads[i]->values();
    std::span<double> v = state.velocity[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double step = lr * g[j];
      v[j] = m * v[j] - step;
      p[j] += m * v[j] - step;
    }
  }
}

}  // namespace stageseq
