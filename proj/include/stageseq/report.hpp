#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "stageseq/training.hpp"

namespace stageseq {

nlohmann::json history_json(const std::vector<EpochRecord>& history);

nlohmann::json eval_report_json(const EvalReport& report, const TrainedModel& model,
                                const std::vector<std::string>& stage_names);

// Confusion matrix with stage names as row (true) and column (predicted)
// headers.
std::string format_confusion_matrix(const EvalReport& report, const std::vector<std::string>& stage_names);

nlohmann::json comparison_json(const ComparisonTable& table);

// "mean ± std %" with one decimal, as reported in the results tables.
std::string format_accuracy(double mean, double stddev);

// Aligned plain-text table with columns Vision model | Steps | Sequence |
// Method | Accuracy.
std::string format_comparison_table(const ComparisonTable& table);

}  // namespace stageseq
