#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stageseq/model.hpp"

namespace stageseq {

struct GradcheckOptions {
  std::size_t image_size = 16;
  std::size_t feature_dim = 8;
  std::size_t hidden_dim = 8;
  int stages = 3;
  int batch = 2;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct TensorCheck {
  std::string name;
  std::size_t size = 0;
  double worst_relative_error = 0.0;
  bool passed = false;
};

// Builds a small proposed model and a random batch of labeled sequences,
// then compares the analytic gradient of the mean batch loss with central
// finite differences, one report per parameter tensor.
std::vector<TensorCheck> check_model_gradients(const GradcheckOptions& options);

}  // namespace stageseq
