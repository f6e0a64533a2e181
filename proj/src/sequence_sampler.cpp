#include "stageseq/sequence_sampler.hpp"

#include <algorithm>
#include <string>

#include "stageseq/error.hpp"

namespace stageseq {

std::string_view to_string(SequenceMode mode) {
  return mode == SequenceMode::cyclic ? "cyclic" : "nonregression";
}

SequenceMode parse_sequence_mode(std::string_view text) {
  if (text == "cyclic") return SequenceMode::cyclic;
  if (text == "nonregression") return SequenceMode::nonregression;
  throw ArgumentError("unknown sequence mode '" + std::string(text) + "'");
}

namespace {

void check_stage_shift(int stages, int shift) {
  if (stages < 2) throw ArgumentError("stage count must be at least 2, got " + std::to_string(stages));
  if (shift < 0 || shift >= stages) {
    throw ArgumentError("shift " + std::to_string(shift) + " outside [0, " + std::to_string(stages - 1) + "]");
  }
}

}  // namespace

std::vector<StageLabel> cyclic_labels(int stages, int shift) {
  check_stage_shift(stages, shift);
  std::vector<StageLabel> labels(stages);
  for (int j = 0; j < stages; ++j) labels[j] = (shift + j) % stages;
  return labels;
}

std::vector<StageLabel> nonregression_labels(int stages, int shift) {
  check_stage_shift(stages, shift);
  std::vector<StageLabel> labels(stages);
  for (int j = 0; j < stages; ++j) labels[j] = std::min(shift + j, stages - 1);
  return labels;
}

std::vector<StageLabel> sequence_labels(SequenceMode mode, int stages, int shift) {
  return mode == SequenceMode::cyclic ? cyclic_labels(stages, shift) : nonregression_labels(stages, shift);
}

SequenceSample sample_sequence(const LabeledDataset& data, SequenceMode mode, int stages, Rng& rng) {
  if (stages < 2) throw ArgumentError("stage count must be at least 2, got " + std::to_string(stages));
  std::uniform_int_distribution<int> shift_dist(0, stages - 1);
  const int shift = shift_dist(rng);
  return sample_sequence_with_shift(data, mode, stages, shift, rng);
}

SequenceSample sample_sequence_with_shift(const LabeledDataset& data, SequenceMode mode, int stages, int shift,
                                          Rng& rng) {
  SequenceSample sample;
  sample.labels = sequence_labels(mode, stages, shift);
  sample.shift = shift;
  sample.mode = mode;
  if (data.stages() != stages) {
    throw DataError("dataset has " + std::to_string(data.stages()) + " stages, sampler expects " +
                    std::to_string(stages));
  }
  sample.images.reserve(stages);
  sample.sources.reserve(stages);
  for (StageLabel stage : sample.labels) {
    const auto& members = data.indices_of(stage);
    if (members.empty()) {
      throw DataError("no images of stage " + std::to_string(stage) + " (" + data.stage_names()[stage] + ")");
    }
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const std::size_t index = members[pick(rng)];
    sample.sources.push_back(index);
    sample.images.push_back(data.image(index));
  }
  return sample;
}

SequenceSample test_sequence(const Image& image, int stages) {
  if (stages < 2) throw ArgumentError("stage count must be at least 2, got " + std::to_string(stages));
  SequenceSample sample;
  sample.images.assign(stages, image);
  return sample;
}

}  // namespace stageseq
