#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "stageseq/dataset.hpp"
#include "stageseq/image.hpp"
#include "stageseq/rng.hpp"

namespace stageseq {

enum class SequenceMode { cyclic, nonregression };

std::string_view to_string(SequenceMode mode);
SequenceMode parse_sequence_mode(std::string_view text);

// K-long training (or test) sequence. `sources` holds the dataset index each
// image was drawn from; test sequences leave it empty.
struct SequenceSample {
  std::vector<Image> images;
  std::vector<StageLabel> labels;
  std::vector<std::size_t> sources;
  int shift = 0;
  SequenceMode mode = SequenceMode::cyclic;
};

/// Position j holds stage (shift + j) mod K.
std::vector<StageLabel> cyclic_labels(int stages, int shift);

/// Position j holds stage min(shift + j, K-1).
std::vector<StageLabel> nonregression_labels(int stages, int shift);

std::vector<StageLabel> sequence_labels(SequenceMode mode, int stages, int shift);

// Draws a shift uniformly from [0, K-1], then one image uniformly (with
// replacement) from each position's stage class.
SequenceSample sample_sequence(const LabeledDataset& data, SequenceMode mode, int stages, Rng& rng);

// Same as sample_sequence with the shift fixed by the caller.
SequenceSample sample_sequence_with_shift(const LabeledDataset& data, SequenceMode mode, int stages, int shift,
                                          Rng& rng);

/// Test-phase input: `image` repeated K times. Labels are left empty.
SequenceSample test_sequence(const Image& image, int stages);

}  // namespace stageseq
