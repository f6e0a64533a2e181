#include "stageseq/error.hpp"
#include "stageseq/ops.hpp"
#include "stageseq/synthetic.hpp"
#include "stageseq/training.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace stageseq;
using testing_support::tagged_dataset;

namespace {

LabeledDataset sized_dataset(const std::vector<int>& sizes) {
  LabeledDataset data(static_cast<int>(sizes.size()), default_stage_names(static_cast<int>(sizes.size())));
  for (std::size_t k = 0; k < sizes.size(); ++k)
    for (int n = 0; n < sizes[k]; ++n) data.add(Image(1, 1, 1, 0.0), static_cast<int>(k), std::to_string(k) + ":" + std::to_string(n));
  return data;
}

std::multiset<std::string> sources_of(const LabeledDataset& d) {
  std::multiset<std::string> out;
  for (std::size_t i = 0; i < d.size(); ++i) out.insert(d.source(i));
  return out;
}

// Small synthetic set rendered in memory.
LabeledDataset synthetic_set(int per_stage, int size, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.per_stage = per_stage;
  cfg.size = size;
  cfg.seed = seed;
  cfg.lesion_base = size >= 24 ? 2 : 1;
  LabeledDataset data(cfg.stages, default_stage_names(cfg.stages));
  Rng rng = make_rng(seed);
  for (int k = 0; k < cfg.stages; ++k)
    for (int n = 0; n < per_stage; ++n) data.add(render_stage_image(cfg, k, rng), k);
  return data;
}

TrainConfig tiny_train_config(ModelKind kind) {
  TrainConfig cfg;
  cfg.model_kind = kind;
  cfg.encoder.feature_dim = 8;
  cfg.encoder.conv_channels = {4, 6};
  cfg.lstm.hidden_dim = 8;
  cfg.steps_per_epoch = 3;
  cfg.batch_size = 4;
  cfg.max_epochs = 4;
  cfg.patience = 4;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("undersampling to the smallest class") {
  LabeledDataset data = sized_dataset({6561, 2113, 460, 805});
  Rng rng = make_rng(1);
  LabeledDataset bal = balance_undersample(data, 460, rng);
  CHECK(bal.size() == 1840);
  for (std::size_t c : bal.class_counts()) CHECK(c == 460);

  Rng rng2 = make_rng(2);
  LabeledDataset other = balance_undersample(data, 460, rng2);
  CHECK(other.class_counts() == bal.class_counts());
  CHECK(sources_of(other) != sources_of(bal));

  LabeledDataset even = sized_dataset({5, 5, 5});
  Rng rng3 = make_rng(3);
  CHECK(sources_of(balance_undersample(even, 5, rng3)) == sources_of(even));

  try {
    balance_undersample(data, 500, rng3);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("S2") != std::string::npos);
  }
}

TEST_CASE("split arithmetic on the balanced set") {
  LabeledDataset data = sized_dataset({460, 460, 460, 460});
  Rng rng = make_rng(4);
  DataSplits s = split_dataset(data, rng);
  CHECK(s.test.size() == 184);
  CHECK(s.val.size() == 164);
  CHECK(s.train.size() == 1492);
  for (int k = 0; k < 4; ++k) {
    CHECK(s.test.class_count(k) == 46);
    CHECK(s.val.class_count(k) == 41);
    CHECK(s.train.class_count(k) == 373);
  }
}

TEST_CASE("splits are disjoint, exhaustive, stratified and seeded") {
  std::mt19937_64 r(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes;
    std::uniform_int_distribution<int> dist(3, 60);
    for (int k = 0; k < 4; ++k) sizes.push_back(dist(r));
    LabeledDataset data = sized_dataset(sizes);
    Rng rng = make_rng(static_cast<std::uint64_t>(trial));
    DataSplits s = split_dataset(data, rng);
    std::multiset<std::string> all = sources_of(s.train);
    for (const std::string& x : sources_of(s.val)) all.insert(x);
    for (const std::string& x : sources_of(s.test)) all.insert(x);
    CHECK(all == sources_of(data));
    CHECK(std::set<std::string>(all.begin(), all.end()).size() == data.size());
    for (int k = 0; k < 4; ++k) {
      const std::size_t n = static_cast<std::size_t>(sizes[k]);
      const std::size_t test = std::max<std::size_t>(1, n / 10);
      const std::size_t val = std::max<std::size_t>(1, (n - test) / 10);
      CHECK(s.test.class_count(k) == test);
      CHECK(s.val.class_count(k) == val);
      CHECK(s.train.class_count(k) == n - test - val);
    }
    Rng again = make_rng(static_cast<std::uint64_t>(trial));
    DataSplits t = split_dataset(data, again);
    CHECK(sources_of(t.test) == sources_of(s.test));
    CHECK(sources_of(t.val) == sources_of(s.val));
  }
  Rng rng = make_rng(1);
  CHECK_THROWS_AS(split_dataset(sized_dataset({10, 2, 10}), rng), DataError);
}

TEST_CASE("rotation") {
  Image img(32, 32);
  std::mt19937_64 r(6);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      img.at(y, x) = 0.5 + 0.4 * std::sin(0.3 * static_cast<double>(x)) * std::cos(0.2 * static_cast<double>(y));
  CHECK(rotate_image(img, 0.0) == img);

  Image back = rotate_image(rotate_image(img, 5.0), -5.0);
  double worst = 0.0;
  for (std::size_t y = 8; y < 24; ++y)
    for (std::size_t x = 8; x < 24; ++x) worst = std::max(worst, std::abs(back.at(y, x) - img.at(y, x)));
  CHECK(worst <= 0.1);

  Image flat(32, 32, 1, 0.7);
  Image rotated = rotate_image(flat, 4.0);
  for (std::size_t y = 4; y < 28; ++y)
    for (std::size_t x = 4; x < 28; ++x) CHECK(std::abs(rotated.at(y, x) - 0.7) <= 1e-12);

  Rng rng = make_rng(7);
  for (int n = 0; n < 20; ++n) {
    Image a = augment_rotate(flat, rng);
    CHECK(a.height == 32);
    for (double v : a.pixels) CHECK(v >= 0.0);
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.resolved_batch_size() == 16);
  cfg.model_kind = ModelKind::baseline;
  CHECK(cfg.resolved_batch_size() == 64);
  cfg.patience = 200;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = TrainConfig{};
  cfg.steps_per_epoch = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("validation sequences use shift zero and the j-th image of each stage") {
  LabeledDataset val = tagged_dataset(4, 3);
  val.add(testing_support::tagged_image(0, 3), 0);
  std::vector<SequenceSample> seqs = validation_sequences(val);
  REQUIRE(seqs.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(seqs[j].labels == cyclic_labels(4, 0));
    for (int k = 0; k < 4; ++k) {
      CHECK(seqs[j].images[k].pixels[0] == k);
      CHECK(seqs[j].images[k].pixels[1] == static_cast<double>(j));
    }
  }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  LabeledDataset data = synthetic_set(6, 16, 8);
  DataSplits s = prepare_splits(data, 1);
  for (ModelKind kind : {ModelKind::baseline, ModelKind::proposed}) {
    TrainConfig cfg = tiny_train_config(kind);
    cfg.learning_rate = 0.0;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    TrainedModel before = train([&] {
      TrainConfig c = cfg;
      c.max_epochs = 1;
      c.patience = 1;
      c.steps_per_epoch = 1;
      return c;
    }(), s.train, s.val);
    TrainedModel after = train(cfg, s.train, s.val);
    std::vector<const Tensor*> a = std::as_const(before.params).tensors();
    std::vector<const Tensor*> b = std::as_const(after.params).tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
    CHECK(after.history.size() == 3);
  }
}

TEST_CASE("early stopping returns the best-validation epoch") {
  LabeledDataset data = synthetic_set(8, 16, 9);
  DataSplits s = prepare_splits(data, 2);
  TrainConfig cfg = tiny_train_config(ModelKind::proposed);
  cfg.max_epochs = 12;
  cfg.patience = 2;
  cfg.learning_rate = 0.05;
  std::vector<ModelParams> snapshots;
  TrainedModel m = train(cfg, s.train, s.val, [&](const EpochRecord&, const ModelParams& p) {
    snapshots.push_back(p);
    return false;
  });
  REQUIRE(!m.history.empty());
  CHECK(m.history.size() <= 12);
  CHECK(snapshots.size() == m.history.size());
  const double best = m.history[static_cast<std::size_t>(m.best_epoch - 1)].val_loss;
  for (const EpochRecord& r : m.history) CHECK(best <= r.val_loss);
  for (std::size_t e = 0; e < m.history.size(); ++e) CHECK(m.history[e].epoch == static_cast<int>(e + 1));
  // Stopped either at the cap or after `patience` epochs without improvement.
  const int after_best = static_cast<int>(m.history.size()) - m.best_epoch;
  CHECK((after_best == cfg.patience || static_cast<int>(m.history.size()) == cfg.max_epochs));
  CHECK(std::abs(validation_loss(m.params, s.val, cfg.loss_weights(4)) - best) <= 1e-12);
  std::vector<const Tensor*> kept = std::as_const(m.params).tensors();
  std::vector<const Tensor*> snap = std::as_const(snapshots[static_cast<std::size_t>(m.best_epoch - 1)]).tensors();
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(*kept[i] == *snap[i]);
}

TEST_CASE("callback can stop training and epochs never exceed the cap") {
  LabeledDataset data = synthetic_set(6, 16, 10);
  DataSplits s = prepare_splits(data, 3);
  TrainConfig cfg = tiny_train_config(ModelKind::baseline);
  TrainedModel m = train(cfg, s.train, s.val, [](const EpochRecord& r, const ModelParams&) { return r.epoch == 2; });
  CHECK(m.history.size() == 2);
  cfg.max_epochs = 3;
  cfg.patience = 3;
  CHECK(train(cfg, s.train, s.val).history.size() <= 3);
}

TEST_CASE("baseline and proposed take the same number of optimizer steps") {
  LabeledDataset data = synthetic_set(6, 16, 11);
  DataSplits s = prepare_splits(data, 4);
  TrainConfig cfg = tiny_train_config(ModelKind::baseline);
  cfg.max_epochs = 3;
  cfg.patience = 3;
  cfg.learning_rate = 0.0;  // flat validation loss, so both run all epochs
  TrainedModel b = train(cfg, s.train, s.val);
  cfg.model_kind = ModelKind::proposed;
  TrainedModel p = train(cfg, s.train, s.val);
  CHECK(b.history.size() == p.history.size());
  CHECK(b.optimizer_steps == p.optimizer_steps);
  CHECK(b.optimizer_steps == 9);
}

TEST_CASE("training is deterministic and independent of the worker count") {
  LabeledDataset data = synthetic_set(6, 16, 12);
  DataSplits s = prepare_splits(data, 5);
  TrainConfig cfg = tiny_train_config(ModelKind::proposed);
  cfg.batch_size = 12;
  cfg.max_epochs = 2;
  cfg.patience = 2;
  TrainedModel a = train(cfg, s.train, s.val);
  cfg.threads = 3;
  TrainedModel b = train(cfg, s.train, s.val);
  std::vector<const Tensor*> x = std::as_const(a.params).tensors(), y = std::as_const(b.params).tensors();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(*x[i] == *y[i]);
  CHECK(a.history.back().train_loss == b.history.back().train_loss);
}

TEST_CASE("baseline trunk has the proposed encoder shapes") {
  Rng r1 = make_rng(1), r2 = make_rng(1);
  ModelConfig mc;
  mc.kind = ModelKind::baseline;
  ModelParams base = init_model(mc, r1);
  mc.kind = ModelKind::proposed;
  ModelParams prop = init_model(mc, r2);
  std::vector<const Tensor*> a = std::as_const(base.encoder).tensors(), b = std::as_const(prop.encoder).tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->shape() == b[i]->shape());
  CHECK(base.tensor_names().size() + 5 == prop.tensor_names().size());
}

TEST_CASE("zero heads predict stage 0 everywhere") {
  LabeledDataset data = synthetic_set(5, 16, 13);
  ModelConfig mc;
  mc.encoder.image_height = mc.encoder.image_width = 16;
  mc.encoder.feature_dim = 8;
  mc.lstm.hidden_dim = 8;
  for (ModelKind kind : {ModelKind::baseline, ModelKind::proposed}) {
    mc.kind = kind;
    Rng rng = make_rng(3);
    ModelParams m = init_model(mc, rng);
    m.encoder.head_weights.fill(0.0);
    m.encoder.head_bias.fill(0.0);
    if (kind == ModelKind::proposed) {
      m.lstm.head_weights.fill(0.0);
      m.lstm.head_bias.fill(0.0);
    }
    std::vector<Head> heads{Head::vision};
    if (kind == ModelKind::proposed) heads.push_back(Head::lstm);
    for (Head head : heads) {
      EvalReport rep = evaluate(m, data, head);
      CHECK(rep.accuracy == 0.25);
      for (StageLabel p : rep.predictions) CHECK(p == 0);
    }
  }
}

TEST_CASE("evaluation report invariants and purity") {
  LabeledDataset data = synthetic_set(7, 16, 14);
  DataSplits s = prepare_splits(data, 6);
  TrainConfig cfg = tiny_train_config(ModelKind::proposed);
  cfg.learning_rate = 0.02;
  TrainedModel m = train(cfg, s.train, s.val);
  for (Head head : {Head::vision, Head::lstm}) {
    EvalReport rep = evaluate(m, data, head);
    CHECK(rep.head == head);
    CHECK(rep.total() == static_cast<std::int64_t>(data.size()));
    std::int64_t trace = 0;
    for (int k = 0; k < 4; ++k) {
      const auto& row = rep.confusion[static_cast<std::size_t>(k)];
      CHECK(std::accumulate(row.begin(), row.end(), std::int64_t{0}) ==
            static_cast<std::int64_t>(data.class_count(k)));
      CHECK(rep.class_counts[static_cast<std::size_t>(k)] == static_cast<std::int64_t>(data.class_count(k)));
      trace += row[static_cast<std::size_t>(k)];
    }
    CHECK(rep.accuracy == static_cast<double>(trace) / static_cast<double>(rep.total()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      CHECK(rep.predictions[i] == predict_stage(m.params, data.image(i), head));
      // Test protocol by hand: K copies, first position.
      SequenceForward fwd = forward_sequence(m.params, test_sequence(data.image(i), 4).images);
      const Tensor& first = head == Head::lstm ? fwd.lstm_probs[0] : fwd.vision_probs[0];
      CHECK(rep.predictions[i] == static_cast<StageLabel>(argmax(first.values())));
    }
    EvalReport again = evaluate(m, data, head);
    CHECK(again.predictions == rep.predictions);
    CHECK(again.confusion == rep.confusion);
  }
}

TEST_CASE("lstm head on a baseline model is an argument error") {
  Rng rng = make_rng(1);
  ModelConfig mc;
  mc.kind = ModelKind::baseline;
  ModelParams m = init_model(mc, rng);
  LabeledDataset data = synthetic_set(1, 32, 15);
  CHECK_THROWS_AS(evaluate(m, data, Head::lstm), ArgumentError);
}

TEST_CASE("mean and sample standard deviation") {
  auto [m1, s1] = mean_and_stddev({0.8});
  CHECK(m1 == 0.8);
  CHECK(s1 == 0.0);
  std::vector<double> v{0.6, 0.7, 0.9, 0.8};
  auto [m, s] = mean_and_stddev(v);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= 4;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  CHECK(std::abs(m - mean) <= 1e-15);
  CHECK(std::abs(s - std::sqrt(ss / 3)) <= 1e-15);
}

TEST_CASE("comparison statistics and determinism") {
  LabeledDataset data = synthetic_set(10, 16, 16);
  CompareConfig cfg;
  cfg.base = tiny_train_config(ModelKind::proposed);
  cfg.base.max_epochs = 2;
  cfg.base.patience = 2;
  cfg.repeats = 2;
  cfg.seed = 3;
  cfg.baseline_batch = 4;
  cfg.proposed_batch = 4;
  ComparisonTable t = compare_experiment(data, cfg);
  CHECK(t.failures.empty());
  REQUIRE(t.blocks.size() == 1);
  REQUIRE(t.blocks[0].rows.size() == 3);
  for (const ComparisonRow& row : t.blocks[0].rows) {
    REQUIRE(row.accuracies.size() == 2);
    auto [m, s] = mean_and_stddev(row.accuracies);
    CHECK(row.mean == m);
    CHECK(row.stddev == s);
    CHECK(std::abs(row.mean - (row.accuracies[0] + row.accuracies[1]) / 2) <= 1e-15);
  }
  ComparisonTable again = compare_experiment(data, cfg);
  for (std::size_t r = 0; r < 3; ++r) CHECK(again.blocks[0].rows[r].accuracies == t.blocks[0].rows[r].accuracies);

  cfg.repeats = 1;
  cfg.modes = {SequenceMode::cyclic, SequenceMode::nonregression};
  ComparisonTable single = compare_experiment(data, cfg);
  CHECK(single.blocks.size() == 2);
  for (const ComparisonBlock& b : single.blocks)
    for (const ComparisonRow& row : b.rows) CHECK(row.stddev == 0.0);
}
