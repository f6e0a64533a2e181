#include "stageseq/error.hpp"
#include "stageseq/model_io.hpp"
#include "stageseq/report.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <sstream>

using namespace stageseq;

namespace {

TrainedModel sample_model(ModelKind kind) {
  ModelConfig mc;
  mc.kind = kind;
  mc.stages = 3;
  mc.encoder.image_height = 16;
  mc.encoder.image_width = 12;
  mc.encoder.feature_dim = 8;
  mc.encoder.conv_channels = {2, 3};
  mc.lstm.hidden_dim = 5;
  Rng rng = make_rng(11);
  TrainedModel m;
  m.params = init_model(mc, rng);
  m.sequence_mode = SequenceMode::nonregression;
  m.seed = 0x0123456789abcdefULL;
  m.best_epoch = 2;
  m.optimizer_steps = 300;
  m.history = {{1, 1.5, 1.4, 0.3, 0.25}, {2, 1.2, 1.1, 0.5, 0.5}, {3, 1.0, 1.3, 0.6, 0.4}};
  return m;
}

std::string serialize(const TrainedModel& m) {
  std::ostringstream out(std::ios::binary);
  write_model(out, m);
  return out.str();
}

TrainedModel parse(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_model(in);
}

void check_same(const TrainedModel& a, const TrainedModel& b) {
  CHECK(a.kind() == b.kind());
  CHECK(a.params.config.stages == b.params.config.stages);
  CHECK(a.params.config.encoder == b.params.config.encoder);
  // Baselines carry no LSTM, so its size is not stored.
  if (a.kind() == ModelKind::proposed) CHECK(a.params.config.lstm == b.params.config.lstm);
  CHECK(a.sequence_mode == b.sequence_mode);
  CHECK(a.seed == b.seed);
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.optimizer_steps == b.optimizer_steps);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].epoch == b.history[i].epoch);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
    CHECK(a.history[i].train_accuracy == b.history[i].train_accuracy);
  }
  std::vector<const Tensor*> x = a.params.tensors(), y = b.params.tensors();
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(*x[i] == *y[i]);
}

}  // namespace

TEST_CASE("model round trip") {
  for (ModelKind kind : {ModelKind::baseline, ModelKind::proposed}) {
    TrainedModel m = sample_model(kind);
    std::string bytes = serialize(m);
    CHECK(bytes.substr(0, 4) == "STSQ");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);
    CHECK(static_cast<unsigned char>(bytes[6]) == static_cast<unsigned char>(kind));
    TrainedModel back = parse(bytes);
    check_same(m, back);
    CHECK(serialize(back) == bytes);
  }
}

TEST_CASE("model file on disk") {
  testing_support::TempDir dir("model");
  TrainedModel m = sample_model(ModelKind::proposed);
  save_model(dir.path() / "m.bin", m);
  check_same(m, load_model(dir.path() / "m.bin"));
  CHECK_THROWS_AS(load_model(dir.path() / "none.bin"), IoError);
}

TEST_CASE("corrupt model files are rejected") {
  const std::string good = serialize(sample_model(ModelKind::proposed));
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse(bad), DataError);
  bad = good;
  bad[4] = 9;
  CHECK_THROWS_AS(parse(bad), DataError);
  bad = good;
  bad[6] = 7;
  CHECK_THROWS_AS(parse(bad), DataError);
  CHECK_THROWS_AS(parse(good.substr(0, good.size() - 3)), DataError);
  CHECK_THROWS_AS(parse(good.substr(0, 20)), DataError);
  CHECK_THROWS_AS(parse(good + "x"), DataError);
  CHECK_THROWS_AS(parse(""), DataError);
}

TEST_CASE("accuracy formatting and comparison outputs") {
  CHECK(format_accuracy(0.631, 0.0123) == "63.1 ± 1.2 %");
  ComparisonTable t;
  t.steps_per_epoch = 100;
  t.repeats = 2;
  t.seed = 11;
  ComparisonBlock block;
  block.rows = {{"baseline", {0.5, 0.7}, 0.6, 0.1414213562}, {"ours (vision output)", {0.8, 0.8}, 0.8, 0.0},
                {"ours (lstm output)", {0.75, 0.85}, 0.8, 0.0707106781}};
  t.blocks.push_back(block);
  std::string text = format_comparison_table(t);
  nlohmann::json j = comparison_json(t);
  CHECK(text.find("Vision model") != std::string::npos);
  CHECK(text.find("Accuracy") != std::string::npos);
  for (const auto& row : j["blocks"][0]["rows"]) {
    CHECK(text.find(row["display"].get<std::string>()) != std::string::npos);
  }
  CHECK(j["blocks"][0]["rows"][0]["mean"] == 0.6);
  CHECK(j["blocks"][0]["rows"][2]["accuracies"][1] == 0.85);
}

TEST_CASE("confusion matrix text uses stage names") {
  EvalReport rep;
  rep.confusion = {{3, 1}, {0, 4}};
  rep.class_counts = {4, 4};
  rep.accuracy = 7.0 / 8.0;
  std::string text = format_confusion_matrix(rep, {"mild", "severe"});
  CHECK(text.find("mild") != std::string::npos);
  CHECK(text.find("severe") != std::string::npos);
  CHECK(rep.total() == 8);
  nlohmann::json j = eval_report_json(rep, sample_model(ModelKind::baseline), {"mild", "severe"});
  CHECK(j["accuracy"] == 0.875);
  CHECK(j["confusion_matrix"][0][1] == 1);
}
