// Command-line driver: gen-data, train, eval, compare, gradcheck.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training or numeric
// error. Results go to stdout, diagnostics to stderr.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "stageseq/dataset.hpp"
#include "stageseq/error.hpp"
#include "stageseq/model_gradcheck.hpp"
#include "stageseq/model_io.hpp"
#include "stageseq/parallel.hpp"
#include "stageseq/report.hpp"
#include "stageseq/synthetic.hpp"
#include "stageseq/training.hpp"

namespace {

using namespace stageseq;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class UsageError : public Error {
 public:
  using Error::Error;
};

using Settings = std::vector<std::pair<std::string, std::string>>;

// Shortest text that reads back to the same value.
template <typename T>
std::string str(const T& value) {
  if constexpr (std::is_arithmetic_v<T>) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
  } else {
    std::ostringstream out;
    out << value;
    return out.str();
  }
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

template <typename T>
std::string join_values(const std::vector<T>& values) {
  std::vector<std::string> parts;
  for (const T& v : values) parts.push_back(str(v));
  return join(parts);
}

void print_settings(const std::string& command, const Settings& settings) {
  std::cout << "# stageseq " << command << '\n';
  for (const auto& [key, value] : settings) std::cout << "# " << key << " = " << value << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

// Options shared by train and compare.
struct TrainingFlags {
  int steps_per_epoch = 100;
  int epochs = 100;
  int patience = 10;
  double lr = 0.001;
  double decay = 1e-6;
  double momentum = 0.9;
  std::size_t feature_dim = 64;
  std::size_t hidden_dim = 64;
  std::vector<std::size_t> conv_channels{8, 16};
  std::vector<double> alpha;
  std::vector<double> beta;
  bool no_augment = false;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--steps-per-epoch", steps_per_epoch, "Optimizer steps per epoch")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--epochs", epochs, "Maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--patience", patience, "Early-stopping patience in epochs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--lr", lr, "Initial learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--decay", decay, "Inverse-time learning-rate decay per update")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--momentum", momentum, "Nesterov momentum")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
    cmd->add_option("--feature-dim", feature_dim, "Encoder feature size C")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--hidden-dim", hidden_dim, "LSTM hidden size G")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--conv-channels", conv_channels, "Conv block widths")->delimiter(',')->capture_default_str();
    cmd->add_option("--alpha", alpha, "LSTM-head loss weight per position (default all 1)")->delimiter(',');
    cmd->add_option("--beta", beta, "Vision-head loss weight per position (default all 1)")->delimiter(',');
    cmd->add_flag("--no-augment", no_augment, "Disable random rotations");
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  }

  TrainConfig to_config() const {
    TrainConfig cfg;
    cfg.steps_per_epoch = steps_per_epoch;
    cfg.max_epochs = epochs;
    cfg.patience = patience;
    cfg.learning_rate = lr;
    cfg.decay = decay;
    cfg.momentum = momentum;
    cfg.encoder.feature_dim = feature_dim;
    cfg.encoder.conv_channels = conv_channels;
    cfg.lstm.hidden_dim = hidden_dim;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.augment = !no_augment;
    cfg.seed = seed;
    cfg.threads = configured_threads();
    if (patience > epochs) throw UsageError("--patience must not exceed --epochs");
    return cfg;
  }

  void describe(Settings& s, int stages) const {
    s.emplace_back("steps-per-epoch", str(steps_per_epoch));
    s.emplace_back("epochs", str(epochs));
    s.emplace_back("patience", str(patience));
    s.emplace_back("lr", str(lr));
    s.emplace_back("decay", str(decay));
    s.emplace_back("momentum", str(momentum));
    s.emplace_back("feature-dim", str(feature_dim));
    s.emplace_back("hidden-dim", str(hidden_dim));
    s.emplace_back("conv-channels", join_values(conv_channels));
    s.emplace_back("alpha", alpha.empty() ? join_values(std::vector<double>(stages, 1.0)) : join_values(alpha));
    s.emplace_back("beta", beta.empty() ? join_values(std::vector<double>(stages, 1.0)) : join_values(beta));
    s.emplace_back("augment", no_augment ? "false" : "true");
    s.emplace_back("seed", str(seed));
    s.emplace_back("threads", str(configured_threads()));
  }
};

struct GenFlags {
  std::string out;
  SynthConfig synth;
  std::vector<std::string> names;
};

int run_gen_data(GenFlags& flags) {
  flags.synth.stage_names = flags.names;
  try {
    flags.synth.validate();
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  const auto& c = flags.synth;
  print_settings("gen-data", {{"out", flags.out},
                              {"stages", str(c.stages)},
                              {"per-stage", str(c.per_stage)},
                              {"size", str(c.size)},
                              {"lesion-base", str(c.lesion_base)},
                              {"noise-sigma", str(c.noise_sigma)},
                              {"drift", str(c.drift)},
                              {"stage-names", join(c.stage_names.empty() ? default_stage_names(c.stages) : c.stage_names)},
                              {"seed", str(c.seed)}});
  const std::size_t written = generate(c, flags.out);
  std::cout << "wrote " << written << " images (" << c.stages << " stages x " << c.per_stage << ") to " << flags.out
            << '\n';
  return kOk;
}

struct TrainFlags {
  std::string data;
  std::string model = "proposed";
  std::string sequence = "cyclic";
  int batch = 0;
  std::string out;
  TrainingFlags common;
};

int run_train(const TrainFlags& flags, bool sequence_given) {
  TrainConfig cfg = flags.common.to_config();
  cfg.model_kind = parse_model_kind(flags.model);
  cfg.sequence_mode = parse_sequence_mode(flags.sequence);
  cfg.batch_size = flags.batch > 0 ? flags.batch : default_batch_size(cfg.model_kind);
  if (cfg.model_kind == ModelKind::baseline && sequence_given) {
    std::cerr << "warning: --sequence is ignored for the baseline model\n";
  }

  const LabeledDataset data = load_dataset(flags.data);
  Settings s{{"data", flags.data},
             {"model", flags.model},
             {"sequence", cfg.model_kind == ModelKind::proposed ? flags.sequence : "n/a"},
             {"batch", str(cfg.batch_size)},
             {"out", flags.out}};
  flags.common.describe(s, data.stages());
  print_settings("train", s);
  // Loss-weight problems are usage errors, not data errors.
  try {
    cfg.loss_weights(data.stages());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const DataSplits splits = prepare_splits(data, cfg.seed);
  std::cout << "split: train " << splits.train.size() << ", val " << splits.val.size() << ", test "
            << splits.test.size() << '\n';
  const TrainedModel model = train(cfg, splits.train, splits.val, [](const EpochRecord& r, const ModelParams&) {
    std::printf("epoch %3d  train_loss %.6f  val_loss %.6f  train_acc %.4f  val_acc %.4f\n", r.epoch, r.train_loss,
                r.val_loss, r.train_accuracy, r.val_accuracy);
    std::fflush(stdout);
    return false;
  });
  save_model(flags.out, model);
  std::cout << "best epoch " << model.best_epoch << " of " << model.history.size() << "; model written to "
            << flags.out << '\n';
  return kOk;
}

struct EvalFlags {
  std::string model;
  std::string data;
  std::string head = "vision";
  std::string split = "test";
  std::string report;
};

int run_eval(const EvalFlags& flags) {
  const TrainedModel model = load_model(flags.model);
  const Head head = parse_head(flags.head);
  if (head == Head::lstm && model.kind() == ModelKind::baseline) {
    throw UsageError("--head lstm needs a proposed model; " + flags.model + " is a baseline model (use --head vision)");
  }
  print_settings("eval", {{"model", flags.model},
                          {"data", flags.data},
                          {"head", flags.head},
                          {"split", flags.split},
                          {"report", flags.report.empty() ? "-" : flags.report},
                          {"seed", str(model.seed)}});
  const LabeledDataset data = load_dataset(flags.data);
  const LabeledDataset testset = flags.split == "all" ? data : prepare_splits(data, model.seed).test;
  const EvalReport report = evaluate(model, testset, head);
  std::cout << "accuracy " << std::fixed << std::setprecision(4) << report.accuracy << " (" << report.total()
            << " images, " << to_string(head) << " head)\n";
  std::cout << format_confusion_matrix(report, data.stage_names());
  if (!flags.report.empty()) {
    write_text(flags.report, eval_report_json(report, model, data.stage_names()).dump(2) + "\n");
  }
  return kOk;
}

struct CompareFlags {
  std::string data;
  int repeats = 20;
  std::string sequence = "cyclic";
  int baseline_batch = kDefaultBaselineBatch;
  int proposed_batch = kDefaultProposedBatch;
  std::string json;
  std::string table;
  TrainingFlags common;
};

int run_compare(const CompareFlags& flags) {
  CompareConfig cfg;
  cfg.base = flags.common.to_config();
  cfg.repeats = flags.repeats;
  cfg.seed = flags.common.seed;
  cfg.baseline_batch = flags.baseline_batch;
  cfg.proposed_batch = flags.proposed_batch;
  if (flags.sequence == "both") {
    cfg.modes = {SequenceMode::cyclic, SequenceMode::nonregression};
  } else {
    cfg.modes = {parse_sequence_mode(flags.sequence)};
  }
  const LabeledDataset data = load_dataset(flags.data);
  Settings s{{"data", flags.data},
             {"repeats", str(flags.repeats)},
             {"sequence", flags.sequence},
             {"baseline-batch", str(flags.baseline_batch)},
             {"proposed-batch", str(flags.proposed_batch)},
             {"json", flags.json.empty() ? "-" : flags.json},
             {"table", flags.table.empty() ? "-" : flags.table}};
  flags.common.describe(s, data.stages());
  print_settings("compare", s);
  try {
    cfg.base.loss_weights(data.stages());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const ComparisonTable table =
      compare_experiment(data, cfg, [](const std::string& line) { std::cerr << line << std::endl; });
  const std::string text = format_comparison_table(table);
  std::cout << text;
  if (!flags.table.empty()) write_text(flags.table, text);
  if (!flags.json.empty()) write_text(flags.json, comparison_json(table).dump(2) + "\n");
  for (const RepeatFailure& f : table.failures) {
    std::cerr << "repeat " << f.repeat + 1 << " failed: " << f.message << '\n';
  }
  return static_cast<int>(table.failures.size()) == table.repeats ? kNumeric : kOk;
}

struct GradcheckFlags {
  GradcheckOptions options;
  std::string dims = "tiny";
};

int run_gradcheck(const GradcheckFlags& flags) {
  const GradcheckOptions& o = flags.options;
  print_settings("gradcheck", {{"dims", flags.dims},
                               {"image", str(o.image_size) + "x" + str(o.image_size)},
                               {"feature-dim", str(o.feature_dim)},
                               {"hidden-dim", str(o.hidden_dim)},
                               {"stages", str(o.stages)},
                               {"batch", str(o.batch)},
                               {"eps", str(o.eps)},
                               {"tol", str(o.tolerance)},
                               {"seed", str(o.seed)}});
  const std::vector<TensorCheck> checks = check_model_gradients(o);
  bool all_passed = true;
  for (const TensorCheck& c : checks) {
    std::printf("%-26s %6zu  worst_rel_err %.3e  %s\n", c.name.c_str(), c.size, c.worst_relative_error,
                c.passed ? "PASS" : "FAIL");
    all_passed = all_passed && c.passed;
  }
  if (!all_passed) {
    for (const TensorCheck& c : checks) {
      if (!c.passed) std::cerr << "gradient check failed for " << c.name << '\n';
    }
    return kNumeric;
  }
  std::cout << "all " << checks.size() << " tensors within tolerance\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disease-progression stage-sequence learning on synthetic staged images"};
  app.require_subcommand(1, 1);

  GenFlags gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a seeded synthetic staged-image dataset");
  gen_cmd->set_config("--config", "", "key=value defaults file");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--stages", gen.synth.stages, "Number of stages K")->check(CLI::Range(2, 64))->capture_default_str();
  gen_cmd->add_option("--per-stage", gen.synth.per_stage, "Images per stage")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--size", gen.synth.size, "Image side length")->check(CLI::Range(8, 4096))->capture_default_str();
  gen_cmd->add_option("--lesion-base", gen.synth.lesion_base, "Lesions added per stage step")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen_cmd->add_option("--noise-sigma", gen.synth.noise_sigma, "Background noise standard deviation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen_cmd->add_option("--drift", gen.synth.drift, "Brightness increment per stage")->capture_default_str();
  gen_cmd->add_option("--stage-names", gen.names, "Comma-separated stage names")->delimiter(',');
  gen_cmd->add_option("--seed", gen.synth.seed, "Random seed")->capture_default_str();

  TrainFlags tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a proposed or baseline model");
  train_cmd->set_config("--config", "", "key=value defaults file");
  train_cmd->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  train_cmd->add_option("--model", tr.model, "proposed | baseline")
      ->check(CLI::IsMember({"proposed", "baseline"}))
      ->capture_default_str();
  CLI::Option* sequence_opt = train_cmd->add_option("--sequence", tr.sequence, "cyclic | nonregression")
                                  ->check(CLI::IsMember({"cyclic", "nonregression"}))
                                  ->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "Batch size (default 16 proposed, 64 baseline)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", tr.out, "Model file to write")->required();
  tr.common.attach(train_cmd);

  EvalFlags ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset");
  eval_cmd->set_config("--config", "", "key=value defaults file");
  eval_cmd->add_option("--model", ev.model, "Model file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--head", ev.head, "vision | lstm")->check(CLI::IsMember({"vision", "lstm"}))->capture_default_str();
  eval_cmd->add_option("--split", ev.split, "test (the model's held-out split) | all")
      ->check(CLI::IsMember({"test", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--report", ev.report, "JSON report path");

  CompareFlags cmp;
  CLI::App* compare_cmd = app.add_subcommand("compare", "Repeated baseline vs proposed comparison");
  compare_cmd->set_config("--config", "", "key=value defaults file");
  compare_cmd->add_option("--data", cmp.data, "Dataset directory or manifest")->required();
  compare_cmd->add_option("--repeats", cmp.repeats, "Independent repeats")->check(CLI::PositiveNumber)->capture_default_str();
  compare_cmd->add_option("--sequence", cmp.sequence, "cyclic | nonregression | both")
      ->check(CLI::IsMember({"cyclic", "nonregression", "both"}))
      ->capture_default_str();
  compare_cmd->add_option("--baseline-batch", cmp.baseline_batch, "Baseline batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  compare_cmd->add_option("--proposed-batch", cmp.proposed_batch, "Proposed batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  compare_cmd->add_option("--json", cmp.json, "JSON output path");
  compare_cmd->add_option("--table", cmp.table, "Plain-text table output path");
  cmp.common.attach(compare_cmd);

  GradcheckFlags gc;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  grad_cmd->set_config("--config", "", "key=value defaults file");
  grad_cmd->add_option("--tol", gc.options.tolerance, "Maximum relative error")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  grad_cmd->add_option("--eps", gc.options.eps, "Central-difference step")->check(CLI::PositiveNumber)->capture_default_str();
  grad_cmd->add_option("--dims", gc.dims, "Model size preset")->check(CLI::IsMember({"tiny"}))->capture_default_str();
  grad_cmd->add_option("--batch", gc.options.batch, "Sequences in the batch")->check(CLI::PositiveNumber)->capture_default_str();
  grad_cmd->add_option("--seed", gc.options.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_data(gen);
    if (train_cmd->parsed()) return run_train(tr, sequence_opt->count() > 0);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (compare_cmd->parsed()) return run_compare(cmp);
    if (grad_cmd->parsed()) return run_gradcheck(gc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}
