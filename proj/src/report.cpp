#include "stageseq/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace stageseq {

nlohmann::json history_json(const std::vector<EpochRecord>& history) {
  nlohmann::json rows = nlohmann::json::array();
  for (const EpochRecord& r : history) {
    rows.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_loss", r.val_loss},
                    {"train_accuracy", r.train_accuracy},
                    {"val_accuracy", r.val_accuracy}});
  }
  return rows;
}

nlohmann::json eval_report_json(const EvalReport& report, const TrainedModel& model,
                                const std::vector<std::string>& stage_names) {
  return {
      {"model_kind", std::string(to_string(model.kind()))},
      {"head", std::string(to_string(report.head))},
      {"accuracy", report.accuracy},
      {"test_size", report.total()},
      {"stage_names", stage_names},
      {"confusion_matrix", report.confusion},
      {"class_counts", report.class_counts},
      {"best_epoch", model.best_epoch},
      {"history", history_json(model.history)},
  };
}

std::string format_confusion_matrix(const EvalReport& report, const std::vector<std::string>& stage_names) {
  std::size_t width = 6;
  for (const std::string& n : stage_names) width = std::max(width, n.size());
  for (const auto& row : report.confusion) {
    for (std::int64_t v : row) width = std::max(width, std::to_string(v).size());
  }
  auto cell = [width](const std::string& s) { return std::string(width - std::min(width, s.size()), ' ') + s; };
  std::ostringstream out;
  out << cell("true\\pred");
  for (const std::string& n : stage_names) out << "  " << cell(n);
  out << '\n';
  for (std::size_t r = 0; r < report.confusion.size(); ++r) {
    out << cell(stage_names.at(r));
    for (std::int64_t v : report.confusion[r]) out << "  " << cell(std::to_string(v));
    out << '\n';
  }
  return out.str();
}

nlohmann::json comparison_json(const ComparisonTable& table) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const ComparisonBlock& block : table.blocks) {
    nlohmann::json rows = nlohmann::json::array();
    for (const ComparisonRow& row : block.rows) {
      rows.push_back({{"method", row.method},
                      {"mean", row.mean},
                      {"stddev", row.stddev},
                      {"accuracies", row.accuracies},
                      {"display", format_accuracy(row.mean, row.stddev)}});
    }
    blocks.push_back({{"sequence_mode", std::string(to_string(block.mode))}, {"rows", rows}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const RepeatFailure& f : table.failures) failures.push_back({{"repeat", f.repeat}, {"message", f.message}});
  return {{"vision_model", "compact-cnn"}, {"steps_per_epoch", table.steps_per_epoch},
          {"repeats", table.repeats},      {"seed", table.seed},
          {"blocks", blocks},              {"failures", failures}};
}

std::string format_accuracy(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f ± %.1f %%", 100.0 * mean, 100.0 * stddev);
  return buf;
}

std::string format_comparison_table(const ComparisonTable& table) {
  const std::vector<std::string> header{"Vision model", "Steps", "Sequence", "Method", "Accuracy"};
  std::vector<std::vector<std::string>> rows;
  for (std::size_t b = 0; b < table.blocks.size(); ++b) {
    const ComparisonBlock& block = table.blocks[b];
    for (std::size_t r = 0; r < block.rows.size(); ++r) {
      const bool first = r == 0;
      rows.push_back({b == 0 && first ? "compact-cnn" : "", first ? std::to_string(table.steps_per_epoch) : "",
                      first ? std::string(to_string(block.mode)) : "", block.rows[r].method,
                      format_accuracy(block.rows[r].mean, block.rows[r].stddev)});
    }
  }
  // The accuracy column is last, so its multi-byte ± needs no padding.
  std::vector<std::size_t> width(header.size() - 1);
  for (std::size_t c = 0; c < width.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& row) {
    std::string out;
    for (std::size_t c = 0; c < width.size(); ++c) {
      out += row[c] + std::string(width[c] - row[c].size(), ' ') + " | ";
    }
    return out + row.back() + "\n";
  };
  std::string out = line(header);
  std::string rule;
  for (std::size_t c = 0; c < width.size(); ++c) rule += std::string(width[c], '-') + "-+-";
  out += rule + std::string(16, '-') + "\n";
  for (const auto& row : rows) out += line(row);
  if (!table.failures.empty()) {
    out += std::to_string(table.failures.size()) + " of " + std::to_string(table.repeats) + " repeats failed\n";
  }
  return out;
}

}  // namespace stageseq
