#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamm/harness/data.hpp"
#include "pamm/harness/metrics.hpp"

namespace pamm::harness {

inline constexpr int kReportSchema = 1;

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  TaskMetrics metrics;
};

struct BaselineComparison {
  std::string name;
  TaskMetrics metrics;
  double delta_g = 0.0;
};

struct RunReport {
  int schema = kReportSchema;
  std::vector<TaskSpec> tasks;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  // Loss on the fixed probe subset of the training split, evaluation mode.
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  TaskMetrics final_metrics;
  // Constant predictors fitted on the training split (majority class, mean).
  TaskMetrics trivial_metrics;
  std::optional<BaselineComparison> baseline;
  nlohmann::json config;
  double wall_clock_seconds = 0.0;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static RunReport load(const std::string& path);

  // Everything except wall-clock time, for reproducibility comparisons.
  nlohmann::json deterministic_json() const;
};

}  // namespace pamm::harness
