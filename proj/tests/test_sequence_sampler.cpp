#include "stageseq/error.hpp"
#include "stageseq/sequence_sampler.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <vector>

using namespace stageseq;
using testing_support::tagged_dataset;
using testing_support::tagged_image;

using Labels = std::vector<StageLabel>;

TEST_CASE("cyclic label examples") {
  CHECK(cyclic_labels(4, 1) == Labels{1, 2, 3, 0});
  CHECK(cyclic_labels(4, 0) == Labels{0, 1, 2, 3});
  CHECK(cyclic_labels(4, 3) == Labels{3, 0, 1, 2});
  CHECK_THROWS_AS(cyclic_labels(4, 4), ArgumentError);
  CHECK_THROWS_AS(cyclic_labels(4, -1), ArgumentError);
  CHECK_THROWS_AS(cyclic_labels(1, 0), ArgumentError);
}

TEST_CASE("non-regression label examples") {
  CHECK(nonregression_labels(5, 1) == Labels{1, 2, 3, 4, 4});
  CHECK(nonregression_labels(4, 0) == Labels{0, 1, 2, 3});
  CHECK(nonregression_labels(4, 2) == Labels{2, 3, 3, 3});
  CHECK_THROWS_AS(nonregression_labels(4, 4), ArgumentError);
  CHECK(sequence_labels(SequenceMode::nonregression, 4, 3) == Labels{3, 3, 3, 3});
}

TEST_CASE("labels match brute-force enumeration for K in [2, 8]") {
  for (int k = 2; k <= 8; ++k) {
    for (int i = 0; i < k; ++i) {
      Labels cyc, nonreg;
      for (int j = 0; j < k; ++j) {
        int c = i;
        for (int step = 0; step < j; ++step) c = (c == k - 1) ? 0 : c + 1;
        cyc.push_back(c);
        nonreg.push_back(i + j < k ? i + j : k - 1);
      }
      CHECK(cyclic_labels(k, i) == cyc);
      CHECK(nonregression_labels(k, i) == nonreg);
    }
  }
}

TEST_CASE("cyclic labels form a Latin square") {
  for (int k = 2; k <= 8; ++k) {
    std::vector<std::vector<int>> seen(k, std::vector<int>(k, 0));  // [position][stage]
    std::vector<std::vector<int>> row_seen(k, std::vector<int>(k, 0));
    for (int i = 0; i < k; ++i) {
      Labels row = cyclic_labels(k, i);
      for (int j = 0; j < k; ++j) {
        ++seen[j][row[j]];
        ++row_seen[i][row[j]];
      }
    }
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        CHECK(seen[a][b] == 1);
        CHECK(row_seen[a][b] == 1);
      }
  }
}

TEST_CASE("non-regression labels are nondecreasing and clamp at the final stage") {
  for (int k = 2; k <= 8; ++k) {
    CHECK(nonregression_labels(k, 0) == cyclic_labels(k, 0));
    for (int i = 0; i < k; ++i) {
      Labels row = nonregression_labels(k, i);
      CHECK(std::is_sorted(row.begin(), row.end()));
      if (i >= 1) CHECK(row.back() == k - 1);
    }
  }
}

TEST_CASE("mode names round trip") {
  CHECK(parse_sequence_mode("cyclic") == SequenceMode::cyclic);
  CHECK(parse_sequence_mode(to_string(SequenceMode::nonregression)) == SequenceMode::nonregression);
  CHECK_THROWS_AS(parse_sequence_mode("random"), ArgumentError);
}

TEST_CASE("singleton classes give the unique sequence") {
  LabeledDataset data = tagged_dataset(4, 1);
  Rng rng = make_rng(1);
  SequenceSample s = sample_sequence_with_shift(data, SequenceMode::cyclic, 4, 0, rng);
  REQUIRE(s.images.size() == 4);
  for (int j = 0; j < 4; ++j) {
    CHECK(s.images[j] == tagged_image(j, 0));
    CHECK(s.labels[j] == j);
    CHECK(s.sources[j] == static_cast<std::size_t>(j));
  }
}

TEST_CASE("each sampled image belongs to its position's stage") {
  LabeledDataset data = tagged_dataset(5, 7);
  Rng rng = make_rng(2);
  for (SequenceMode mode : {SequenceMode::cyclic, SequenceMode::nonregression}) {
    for (int trial = 0; trial < 500; ++trial) {
      SequenceSample s = sample_sequence(data, mode, 5, rng);
      CHECK(s.mode == mode);
      CHECK(s.labels == sequence_labels(mode, 5, s.shift));
      for (std::size_t j = 0; j < s.images.size(); ++j) {
        CHECK(static_cast<int>(s.images[j].pixels[0]) == s.labels[j]);
        CHECK(data.label(s.sources[j]) == s.labels[j]);
      }
    }
  }
}

TEST_CASE("full clamp with the last shift") {
  LabeledDataset data = tagged_dataset(4, 3);
  Rng rng = make_rng(3);
  SequenceSample s = sample_sequence_with_shift(data, SequenceMode::nonregression, 4, 3, rng);
  CHECK(s.labels == Labels{3, 3, 3, 3});
  for (const Image& img : s.images) CHECK(img.pixels[0] == 3.0);
}

TEST_CASE("shift frequencies are uniform") {
  LabeledDataset data = tagged_dataset(4, 2);
  Rng rng = make_rng(4);
  std::array<int, 4> counts{};
  const int draws = 10000;
  for (int n = 0; n < draws; ++n) ++counts[sample_sequence(data, SequenceMode::cyclic, 4, rng).shift];
  double chi2 = 0.0;
  for (int c : counts) {
    const double freq = static_cast<double>(c) / draws;
    CHECK(freq >= 0.2);
    CHECK(freq <= 0.3);
    chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  }
  CHECK(chi2 < 16.27);  // 3 degrees of freedom, p = 0.001
}

TEST_CASE("sampling is reproducible for a fixed seed") {
  LabeledDataset data = tagged_dataset(4, 10);
  Rng a = make_rng(9, {3}), b = make_rng(9, {3});
  for (int n = 0; n < 50; ++n) {
    SequenceSample x = sample_sequence(data, SequenceMode::cyclic, 4, a);
    SequenceSample y = sample_sequence(data, SequenceMode::cyclic, 4, b);
    CHECK(x.sources == y.sources);
    CHECK(x.shift == y.shift);
  }
}

TEST_CASE("missing stage class is a data error naming the stage") {
  LabeledDataset data(3, {"mild", "moderate", "severe"});
  data.add(tagged_image(0, 0), 0);
  data.add(tagged_image(2, 0), 2);
  Rng rng = make_rng(5);
  try {
    sample_sequence_with_shift(data, SequenceMode::cyclic, 3, 0, rng);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("moderate") != std::string::npos);
  }
  // Non-regression with shift 2 only needs the final stage.
  CHECK_NOTHROW(sample_sequence_with_shift(data, SequenceMode::nonregression, 3, 2, rng));
}

TEST_CASE("test sequence repeats the image") {
  Image img = tagged_image(1, 5);
  for (int k : {2, 4}) {
    SequenceSample s = test_sequence(img, k);
    REQUIRE(s.images.size() == static_cast<std::size_t>(k));
    for (const Image& a : s.images)
      for (const Image& b : s.images) CHECK(a == b);
    CHECK(s.images[0] == img);
  }
  CHECK_THROWS_AS(test_sequence(img, 1), ArgumentError);
}
