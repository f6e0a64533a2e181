#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stageseq/dataset.hpp"
#include "stageseq/model.hpp"
#include "stageseq/rng.hpp"
#include "stageseq/sequence_sampler.hpp"

namespace stageseq {

inline constexpr int kDefaultProposedBatch = 16;
inline constexpr int kDefaultBaselineBatch = 64;

int default_batch_size(ModelKind kind);

struct TrainConfig {
  ModelKind model_kind = ModelKind::proposed;
  SequenceMode sequence_mode = SequenceMode::cyclic;
  int steps_per_epoch = 100;
  int batch_size = 0;  // 0 selects default_batch_size(model_kind)
  int max_epochs = 100;
  int patience = 10;
  double learning_rate = 0.001;
  double decay = 1e-6;
  double momentum = 0.9;
  std::vector<double> alpha;  // empty: all ones
  std::vector<double> beta;   // empty: all ones
  EncoderConfig encoder;      // image geometry is taken from the data
  LstmConfig lstm;
  bool augment = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  int resolved_batch_size() const { return batch_size > 0 ? batch_size : default_batch_size(model_kind); }
  LossWeights loss_weights(int stages) const;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainedModel {
  ModelParams params;
  SequenceMode sequence_mode = SequenceMode::cyclic;
  std::uint64_t seed = 0;
  int best_epoch = 0;                // 1-based epoch whose weights are kept; 0 if untrained
  std::uint64_t optimizer_steps = 0;  // total updates applied during training
  std::vector<EpochRecord> history;   // one record per completed epoch

  ModelKind kind() const { return params.config.kind; }
};

// Called after each epoch with the current (not best) parameters. Returning
// true stops training after that epoch.
using EpochCallback = std::function<bool(const EpochRecord&, const ModelParams&)>;

struct DataSplits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

// Exactly n_per_class images per stage, drawn without replacement. Selected
// images keep their original relative order.
LabeledDataset balance_undersample(const LabeledDataset& data, std::size_t n_per_class, Rng& rng);

// Stratified per stage: test = max(1, floor(n/10)); of the rest,
// val = max(1, floor(rest/10)); train takes the remainder.
DataSplits split_dataset(const LabeledDataset& data, Rng& rng);

// Undersamples to the smallest class, then splits, using the split stream of
// `seed`. This is how the CLI and the comparison harness prepare data.
DataSplits prepare_splits(const LabeledDataset& data, std::uint64_t seed);

inline constexpr double kMaxRotationDegrees = 5.0;

// Rotation about the image center by `degrees` with bilinear interpolation;
// samples that fall outside the source are 0.
Image rotate_image(const Image& image, double degrees);
// rotate_image with an angle drawn uniformly from [-5°, +5°].
Image augment_rotate(const Image& image, Rng& rng);

// Validation sequences: cyclic shift 0, sequence j uses the j-th image of
// every stage, as many sequences as the smallest stage has images.
std::vector<SequenceSample> validation_sequences(const LabeledDataset& val);

double validation_loss(const ModelParams& model, const LabeledDataset& val, const LossWeights& weights);

// Trains until validation loss has not improved for `patience` epochs or
// `max_epochs` is reached, and returns the best-validation parameters.
// Throws TrainingError on a non-finite loss or gradient.
TrainedModel train(const TrainConfig& config, const LabeledDataset& train_data, const LabeledDataset& val_data,
                   const EpochCallback& on_epoch = {});

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // rows = true stage
  Head head = Head::vision;
  std::vector<std::int64_t> class_counts;
  std::vector<StageLabel> predictions;  // per test image, in dataset order
  std::int64_t total() const;
};

EvalReport evaluate(const ModelParams& model, const LabeledDataset& testset, Head head);
inline EvalReport evaluate(const TrainedModel& model, const LabeledDataset& testset, Head head) {
  return evaluate(model.params, testset, head);
}

struct CompareConfig {
  TrainConfig base;  // model_kind, batch_size and sequence_mode are set per run
  int repeats = 20;
  std::uint64_t seed = 0;
  std::vector<SequenceMode> modes{SequenceMode::cyclic};
  int baseline_batch = kDefaultBaselineBatch;
  int proposed_batch = kDefaultProposedBatch;
};

struct ComparisonRow {
  std::string method;  // "baseline", "ours (vision output)", "ours (lstm output)"
  std::vector<double> accuracies;  // per successful repeat
  double mean = 0.0;
  double stddev = 0.0;
};

struct ComparisonBlock {
  SequenceMode mode = SequenceMode::cyclic;
  std::vector<ComparisonRow> rows;
};

struct RepeatFailure {
  int repeat = 0;
  std::string message;
};

struct ComparisonTable {
  int steps_per_epoch = 0;
  int repeats = 0;
  std::uint64_t seed = 0;
  std::vector<ComparisonBlock> blocks;
  std::vector<RepeatFailure> failures;
};

// Sample mean and standard deviation (n-1 denominator; 0 when n < 2).
std::pair<double, double> mean_and_stddev(const std::vector<double>& values);

// Repeated baseline-vs-proposed comparison. Each repeat draws a fresh
// balanced split, trains the baseline once and the proposed model once per
// sequence mode on that split, and records test accuracy for the baseline,
// the proposed vision head and the proposed LSTM head. A repeat that throws is
// recorded in `failures` and left out of the statistics. `progress` receives
// one line per finished run.
ComparisonTable compare_experiment(const LabeledDataset& data, const CompareConfig& config,
                                   const std::function<void(const std::string&)>& progress = {});

}  // namespace stageseq
