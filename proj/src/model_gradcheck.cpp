#include "stageseq/model_gradcheck.hpp"

#include "stageseq/gradcheck.hpp"
#include "stageseq/sequence_sampler.hpp"

namespace stageseq {

std::vector<TensorCheck> check_model_gradients(const GradcheckOptions& options) {
  ModelConfig config;
  config.kind = ModelKind::proposed;
  config.stages = options.stages;
  config.encoder.image_height = options.image_size;
  config.encoder.image_width = options.image_size;
  config.encoder.feature_dim = options.feature_dim;
  config.lstm.hidden_dim = options.hidden_dim;

  Rng rng = make_rng(options.seed, {tag(Stream::gradcheck)});
  ModelParams model = init_model(config, rng);
  // Nonzero biases so every term of the backward pass is exercised.
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  for (Tensor* t : model.tensors()) {
    if (t->rank() == 1) {
      for (double& v : t->values()) v += small(rng);
    }
  }

  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  std::uniform_int_distribution<int> shift(0, options.stages - 1);
  struct Item {
    std::vector<Image> images;
    std::vector<StageLabel> labels;
  };
  std::vector<Item> batch(static_cast<std::size_t>(options.batch));
  for (Item& item : batch) {
    item.labels = cyclic_labels(options.stages, shift(rng));
    for (int k = 0; k < options.stages; ++k) {
      Image image(options.image_size, options.image_size);
      for (double& v : image.pixels) v = pixel(rng);
      item.images.push_back(std::move(image));
    }
  }
  const LossWeights weights = LossWeights::ones(options.stages);
  const double scale = 1.0 / options.batch;

  ModelParams analytic = zeros_like(model);
  for (const Item& item : batch) sequence_loss_and_grad(model, item.images, item.labels, weights, &analytic, scale);

  auto loss = [&] {
    double total = 0.0;
    for (const Item& item : batch) total += sequence_loss_and_grad(model, item.images, item.labels, weights, nullptr);
    return total * scale;
  };
  const std::vector<Tensor*> params = model.tensors();
  const std::vector<Tensor> numeric = finite_diff_gradient(loss, params, options.eps);

  const auto names = model.tensor_names();
  const auto analytic_tensors = analytic.tensors();
  std::vector<TensorCheck> checks;
  for (std::size_t i = 0; i < params.size(); ++i) {
    TensorCheck check;
    check.name = names[i];
    check.size = params[i]->size();
    check.worst_relative_error = max_relative_error(*analytic_tensors[i], numeric[i]);
    check.passed = check.worst_relative_error <= options.tolerance;
    checks.push_back(check);
  }
  return checks;
}

}  // namespace stageseq
