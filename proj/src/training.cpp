#include "stageseq/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "stageseq/error.hpp"
#include "stageseq/ops.hpp"
#include "stageseq/optimizer.hpp"
#include "stageseq/parallel.hpp"

namespace stageseq {

int default_batch_size(ModelKind kind) {
  return kind == ModelKind::baseline ? kDefaultBaselineBatch : kDefaultProposedBatch;
}

LossWeights TrainConfig::loss_weights(int stages) const {
  LossWeights w = LossWeights::ones(stages);
  if (!alpha.empty()) w.alpha = alpha;
  if (!beta.empty()) w.beta = beta;
  w.validate(stages);
  return w;
}

void TrainConfig::validate() const {
  if (steps_per_epoch <= 0) throw ArgumentError("steps_per_epoch must be positive");
  if (batch_size < 0) throw ArgumentError("batch size must be positive");
  if (max_epochs <= 0) throw ArgumentError("max_epochs must be positive");
  if (patience <= 0 || patience > max_epochs) throw ArgumentError("patience must lie in [1, max_epochs]");
  if (!(learning_rate >= 0.0)) throw ArgumentError("learning rate must be nonnegative");
  if (!(decay >= 0.0)) throw ArgumentError("decay must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
}

LabeledDataset balance_undersample(const LabeledDataset& data, std::size_t n_per_class, Rng& rng) {
  std::vector<std::size_t> chosen;
  for (int k = 0; k < data.stages(); ++k) {
    std::vector<std::size_t> members = data.indices_of(k);
    if (members.size() < n_per_class) {
      throw DataError("stage " + std::to_string(k) + " (" + data.stage_names()[k] + ") has " +
                      std::to_string(members.size()) + " images, " + std::to_string(n_per_class - members.size()) +
                      " short of " + std::to_string(n_per_class));
    }
    std::shuffle(members.begin(), members.end(), rng);
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_per_class));
  }
  std::sort(chosen.begin(), chosen.end());
  return data.subset(chosen);
}

DataSplits split_dataset(const LabeledDataset& data, Rng& rng) {
  if (data.empty()) throw DataError("cannot split an empty dataset");
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  for (int k = 0; k < data.stages(); ++k) {
    std::vector<std::size_t> members = data.indices_of(k);
    const std::size_t n = members.size();
    if (n < 3) {
      throw DataError("stage " + std::to_string(k) + " (" + data.stage_names()[k] + ") has " + std::to_string(n) +
                      " images; a split needs at least 3");
    }
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_test = std::max<std::size_t>(1, n / 10);
    const std::size_t rest = n - n_test;
    const std::size_t n_val = std::max<std::size_t>(1, rest / 10);
    auto it = members.begin();
    test_idx.insert(test_idx.end(), it, it + static_cast<std::ptrdiff_t>(n_test));
    it += static_cast<std::ptrdiff_t>(n_test);
    val_idx.insert(val_idx.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
    it += static_cast<std::ptrdiff_t>(n_val);
    train_idx.insert(train_idx.end(), it, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {data.subset(train_idx), data.subset(val_idx), data.subset(test_idx)};
}

DataSplits prepare_splits(const LabeledDataset& data, std::uint64_t seed) {
  Rng rng = make_rng(seed, {tag(Stream::split)});
  const std::vector<std::size_t> counts = data.class_counts();
  const std::size_t smallest = *std::min_element(counts.begin(), counts.end());
  return split_dataset(balance_undersample(data, smallest, rng), rng);
}

Image rotate_image(const Image& image, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double max_y = static_cast<double>(image.height) - 1.0;
  const double max_x = static_cast<double>(image.width) - 1.0;
  Image out(image.height, image.width, image.channels);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      // Inverse mapping: where does this output pixel come from?
      const double sx = cx + cos_t * dx + sin_t * dy;
      const double sy = cy - sin_t * dx + cos_t * dy;
      if (sx < 0.0 || sy < 0.0 || sx > max_x || sy > max_y) continue;
      const auto x0 = static_cast<std::size_t>(sx);
      const auto y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const std::size_t y1 = std::min(y0 + 1, image.height - 1);
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - fx) + image.at(y0, x1, c) * fx;
        const double bottom = image.at(y1, x0, c) * (1.0 - fx) + image.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Image augment_rotate(const Image& image, Rng& rng) {
  std::uniform_real_distribution<double> angle(-kMaxRotationDegrees, kMaxRotationDegrees);
  return rotate_image(image, angle(rng));
}

std::vector<SequenceSample> validation_sequences(const LabeledDataset& val) {
  const int K = val.stages();
  std::size_t count = val.size();
  for (int k = 0; k < K; ++k) count = std::min(count, val.class_count(k));
  if (count == 0) throw DataError("validation data lacks at least one stage");
  const std::vector<StageLabel> labels = cyclic_labels(K, 0);
  std::vector<SequenceSample> sequences(count);
  for (std::size_t j = 0; j < count; ++j) {
    SequenceSample& s = sequences[j];
    s.labels = labels;
    s.shift = 0;
    s.mode = SequenceMode::cyclic;
    for (StageLabel stage : labels) {
      const std::size_t index = val.indices_of(stage)[j];
      s.sources.push_back(index);
      s.images.push_back(val.image(index));
    }
  }
  return sequences;
}

double validation_loss(const ModelParams& model, const LabeledDataset& val, const LossWeights& weights) {
  if (val.empty()) throw DataError("validation set is empty");
  double total = 0.0;
  if (model.config.kind == ModelKind::baseline) {
    for (std::size_t i = 0; i < val.size(); ++i) total += image_loss_and_grad(model, val.image(i), val.label(i), nullptr);
    return total / static_cast<double>(val.size());
  }
  const std::vector<SequenceSample> sequences = validation_sequences(val);
  for (const SequenceSample& s : sequences) {
    total += sequence_loss_and_grad(model, s.images, s.labels, weights, nullptr);
  }
  return total / static_cast<double>(sequences.size());
}

namespace {

constexpr std::size_t kGradientGroup = 8;

struct BatchItem {
  std::vector<Image> images;
  std::vector<StageLabel> labels;
};

struct ItemResult {
  double loss = 0.0;
  int correct = 0;
  int predictions = 0;
};

void require_all_stages(const LabeledDataset& data, const char* which) {
  for (int k = 0; k < data.stages(); ++k) {
    if (data.class_count(k) == 0) {
      throw DataError(std::string(which) + " data has no images of stage " + std::to_string(k) + " (" +
                      data.stage_names()[k] + ")");
    }
  }
}

double accuracy_on(const ModelParams& model, const LabeledDataset& data, Head head) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict_stage(model, data.image(i), head) == data.label(i)) ++correct;
  }
  return data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TrainedModel train(const TrainConfig& config, const LabeledDataset& train_data, const LabeledDataset& val_data,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (train_data.empty()) throw DataError("training set is empty");
  const int K = train_data.stages();
  if (val_data.stages() != K) throw DataError("training and validation stage counts differ");
  require_all_stages(train_data, "training");
  require_all_stages(val_data, "validation");

  ModelConfig model_config;
  model_config.kind = config.model_kind;
  model_config.stages = K;
  model_config.encoder = config.encoder;
  model_config.encoder.image_height = train_data.image(0).height;
  model_config.encoder.image_width = train_data.image(0).width;
  model_config.encoder.channels = train_data.image(0).channels;
  model_config.lstm = config.lstm;
  const LossWeights weights = config.loss_weights(K);
  const bool proposed = config.model_kind == ModelKind::proposed;
  const auto kind_tag = static_cast<std::uint64_t>(config.model_kind);

  Rng init_rng = make_rng(config.seed, {tag(Stream::init), kind_tag});
  Rng rng = make_rng(config.seed, {tag(Stream::sampling), kind_tag});

  TrainedModel result;
  result.params = init_model(model_config, init_rng);
  result.sequence_mode = config.sequence_mode;
  result.seed = config.seed;
  ModelParams& model = result.params;

  const std::vector<Tensor*> param_refs = model.tensors();
  const std::vector<const Tensor*> const_refs(param_refs.begin(), param_refs.end());
  OptimizerState optimizer = OptimizerState::create(const_refs, config.learning_rate, config.decay, config.momentum);

  const int batch = config.resolved_batch_size();
  const double scale = 1.0 / batch;
  // Items are summed in fixed groups, then groups in index order, so the
  // result does not depend on the worker count.
  const std::size_t groups = (static_cast<std::size_t>(batch) + kGradientGroup - 1) / kGradientGroup;
  std::vector<ModelParams> group_grads(groups, zeros_like(model));
  ModelParams step_grad = zeros_like(model);
  const std::vector<const Tensor*> grad_refs = [&] {
    auto refs = step_grad.tensors();
    return std::vector<const Tensor*>(refs.begin(), refs.end());
  }();
  std::vector<BatchItem> items(static_cast<std::size_t>(batch));
  std::vector<ItemResult> outcomes(static_cast<std::size_t>(batch));
  std::uniform_int_distribution<std::size_t> pick_image(0, train_data.size() - 1);

  ModelParams best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    long correct = 0, predictions = 0;
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      // Sampling and augmentation stay on this thread so the random stream
      // does not depend on the worker count.
      for (BatchItem& item : items) {
        item.images.clear();
        item.labels.clear();
        if (proposed) {
          SequenceSample s = sample_sequence(train_data, config.sequence_mode, K, rng);
          item.labels = std::move(s.labels);
          for (Image& image : s.images) {
            item.images.push_back(config.augment ? augment_rotate(image, rng) : std::move(image));
          }
        } else {
          const std::size_t index = pick_image(rng);
          item.labels.push_back(train_data.label(index));
          item.images.push_back(config.augment ? augment_rotate(train_data.image(index), rng)
                                               : train_data.image(index));
        }
      }
      parallel_for(groups, config.threads, [&](std::size_t group) {
        ModelParams& grads = group_grads[group];
        for (Tensor* t : grads.tensors()) t->fill(0.0);
        const std::size_t end = std::min(items.size(), (group + 1) * kGradientGroup);
        for (std::size_t b = group * kGradientGroup; b < end; ++b) {
          ItemResult& out = outcomes[b];
          out = {};
          if (proposed) {
            SequenceForward fwd;
            out.loss = sequence_loss_and_grad(model, items[b].images, items[b].labels, weights, &grads, scale, &fwd);
            for (std::size_t k = 0; k < fwd.lstm_probs.size(); ++k) {
              out.correct += static_cast<int>(argmax(fwd.lstm_probs[k].values())) == items[b].labels[k];
            }
            out.predictions = static_cast<int>(fwd.lstm_probs.size());
          } else {
            Tensor probs;
            out.loss = image_loss_and_grad(model, items[b].images[0], items[b].labels[0], &grads, scale, &probs);
            out.correct = static_cast<int>(argmax(probs.values())) == items[b].labels[0];
            out.predictions = 1;
          }
        }
      });

      for (Tensor* t : step_grad.tensors()) t->fill(0.0);
      for (const ModelParams& g : group_grads) accumulate(step_grad, g);
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < items.size(); ++b) {
        batch_loss += outcomes[b].loss;
        correct += outcomes[b].correct;
        predictions += outcomes[b].predictions;
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss)) throw TrainingError("training loss is not finite", epoch, step);
      if (!step_grad.all_finite()) throw TrainingError("gradient is not finite", epoch, step);
      sgd_nesterov_step(param_refs, grad_refs, optimizer);
      loss_sum += batch_loss;
    }
    if (!model.all_finite()) throw TrainingError("parameters are not finite", epoch, config.steps_per_epoch);

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / config.steps_per_epoch;
    record.train_accuracy = predictions ? static_cast<double>(correct) / static_cast<double>(predictions) : 0.0;
    record.val_loss = validation_loss(model, val_data, weights);
    if (!std::isfinite(record.val_loss)) {
      throw TrainingError("validation loss is not finite", epoch, config.steps_per_epoch);
    }
    record.val_accuracy = accuracy_on(model, val_data, proposed ? Head::lstm : Head::vision);
    result.history.push_back(record);

    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch && on_epoch(record, model)) break;
    if (since_best >= config.patience) break;
  }
  result.optimizer_steps = optimizer.update_count;
  result.params = std::move(best);
  return result;
}

std::int64_t EvalReport::total() const {
  std::int64_t n = 0;
  for (std::int64_t c : class_counts) n += c;
  return n;
}

EvalReport evaluate(const ModelParams& model, const LabeledDataset& testset, Head head) {
  if (model.config.kind == ModelKind::baseline && head == Head::lstm) {
    throw ArgumentError("the LSTM head is not available on a baseline model");
  }
  if (testset.stages() != model.config.stages) {
    throw DataError("test set has " + std::to_string(testset.stages()) + " stages, model expects " +
                    std::to_string(model.config.stages));
  }
  if (testset.empty()) throw DataError("test set is empty");
  const auto K = static_cast<std::size_t>(model.config.stages);
  EvalReport report;
  report.head = head;
  report.confusion.assign(K, std::vector<std::int64_t>(K, 0));
  report.class_counts.assign(K, 0);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const StageLabel truth = testset.label(i);
    const StageLabel predicted = predict_stage(model, testset.image(i), head);
    report.predictions.push_back(predicted);
    ++report.confusion[truth][predicted];
    ++report.class_counts[truth];
    hits += truth == predicted;
  }
  report.accuracy = static_cast<double>(hits) / static_cast<double>(testset.size());
  return report;
}

std::pair<double, double> mean_and_stddev(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

ComparisonTable compare_experiment(const LabeledDataset& data, const CompareConfig& config,
                                   const std::function<void(const std::string&)>& progress) {
  if (config.repeats < 1) throw ArgumentError("repeats must be at least 1");
  if (config.modes.empty()) throw ArgumentError("at least one sequence mode is required");
  config.base.validate();

  ComparisonTable table;
  table.steps_per_epoch = config.base.steps_per_epoch;
  table.repeats = config.repeats;
  table.seed = config.seed;
  for (SequenceMode mode : config.modes) {
    table.blocks.push_back({mode, {{"baseline", {}, 0, 0}, {"ours (vision output)", {}, 0, 0},
                                   {"ours (lstm output)", {}, 0, 0}}});
  }
  auto say = [&](const std::string& line) {
    if (progress) progress(line);
  };

  for (int r = 0; r < config.repeats; ++r) {
    Rng repeat_rng = make_rng(config.seed, {static_cast<std::uint64_t>(r)});
    const std::uint64_t repeat_seed = repeat_rng();
    const std::string prefix = "repeat " + std::to_string(r + 1) + "/" + std::to_string(config.repeats);
    try {
      const DataSplits splits = prepare_splits(data, repeat_seed);

      TrainConfig baseline_cfg = config.base;
      baseline_cfg.model_kind = ModelKind::baseline;
      baseline_cfg.batch_size = config.baseline_batch;
      baseline_cfg.seed = repeat_seed;
      const TrainedModel baseline = train(baseline_cfg, splits.train, splits.val);
      const double baseline_acc = evaluate(baseline, splits.test, Head::vision).accuracy;
      say(prefix + " baseline: accuracy " + std::to_string(baseline_acc) + " after " +
          std::to_string(baseline.history.size()) + " epochs");

      std::vector<std::pair<double, double>> proposed_acc;
      for (SequenceMode mode : config.modes) {
        TrainConfig proposed_cfg = config.base;
        proposed_cfg.model_kind = ModelKind::proposed;
        proposed_cfg.batch_size = config.proposed_batch;
        proposed_cfg.sequence_mode = mode;
        proposed_cfg.seed = repeat_seed;
        const TrainedModel proposed = train(proposed_cfg, splits.train, splits.val);
        const double vision = evaluate(proposed, splits.test, Head::vision).accuracy;
        const double lstm = evaluate(proposed, splits.test, Head::lstm).accuracy;
        proposed_acc.emplace_back(vision, lstm);
        say(prefix + " proposed (" + std::string(to_string(mode)) + "): vision " + std::to_string(vision) +
            ", lstm " + std::to_string(lstm) + " after " + std::to_string(proposed.history.size()) + " epochs");
      }
      for (std::size_t m = 0; m < table.blocks.size(); ++m) {
        table.blocks[m].rows[0].accuracies.push_back(baseline_acc);
        table.blocks[m].rows[1].accuracies.push_back(proposed_acc[m].first);
        table.blocks[m].rows[2].accuracies.push_back(proposed_acc[m].second);
      }
    } catch (const Error& e) {
      table.failures.push_back({r, e.what()});
      say(prefix + " failed: " + e.what());
    }
  }
  for (ComparisonBlock& block : table.blocks) {
    for (ComparisonRow& row : block.rows) std::tie(row.mean, row.stddev) = mean_and_stddev(row.accuracies);
  }
  return table;
}

}  // namespace stageseq
