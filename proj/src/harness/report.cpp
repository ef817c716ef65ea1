#include "pamm/harness/report.hpp"

#include <fstream>
#include <stdexcept>

#include "pamm/harness/config.hpp"

namespace pamm::harness {

using nlohmann::json;

namespace {

std::string kind_name(TaskKind k) {
  return k == TaskKind::kClassification ? "classification" : "regression";
}

std::string loss_name(LossKind k) { return k == LossKind::kCrossEntropy ? "cross-entropy" : "L1"; }

json task_json(const TaskSpec& t) {
  return {{"name", t.name},
          {"kind", kind_name(t.kind)},
          {"channels", t.channels},
          {"loss", loss_name(t.loss)},
          {"metric", to_string(t.metric)},
          {"lower_is_better", t.lower_is_better}};
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "classification" && kind != "regression") {
    throw std::invalid_argument("report: unknown task kind '" + kind + "'");
  }
  t.kind = kind == "classification" ? TaskKind::kClassification : TaskKind::kRegression;
  t.channels = j.at("channels").get<std::size_t>();
  t.loss = j.at("loss").get<std::string>() == "L1" ? LossKind::kL1 : LossKind::kCrossEntropy;
  t.metric = metric_from_string(j.at("metric").get<std::string>());
  t.lower_is_better = j.at("lower_is_better").get<bool>();
  t.validate();
  return t;
}

}  // namespace

json RunReport::to_json() const {
  json j = deterministic_json();
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

json RunReport::deterministic_json() const {
  json j;
  j["schema"] = schema;
  j["tasks"] = json::array();
  for (const auto& t : tasks) j["tasks"].push_back(task_json(t));
  j["epochs"] = json::array();
  for (const auto& e : epochs) {
    j["epochs"].push_back({{"epoch", e.epoch}, {"step", e.step}, {"metrics", e.metrics}});
  }
  j["step_losses"] = step_losses;
  j["train_loss"] = {{"initial", initial_train_loss}, {"final", final_train_loss}};
  j["final_metrics"] = final_metrics;
  j["trivial_metrics"] = trivial_metrics;
  if (baseline) {
    j["baseline"] = {{"name", baseline->name},
                     {"metrics", baseline->metrics},
                     {"delta_g", baseline->delta_g}};
  } else {
    j["baseline"] = nullptr;
  }
  j["config"] = config;
  return j;
}

RunReport RunReport::from_json(const json& j) {
  try {
    RunReport r;
    r.schema = j.at("schema").get<int>();
    if (r.schema != kReportSchema) {
      throw std::invalid_argument("report: unsupported schema " + std::to_string(r.schema));
    }
    for (const auto& t : j.at("tasks")) r.tasks.push_back(task_from_json(t));
    for (const auto& e : j.at("epochs")) {
      r.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("step").get<std::size_t>(),
                          e.at("metrics").get<TaskMetrics>()});
    }
    r.step_losses = j.at("step_losses").get<std::vector<double>>();
    r.initial_train_loss = j.at("train_loss").at("initial").get<double>();
    r.final_train_loss = j.at("train_loss").at("final").get<double>();
    r.final_metrics = j.at("final_metrics").get<TaskMetrics>();
    r.trivial_metrics = j.at("trivial_metrics").get<TaskMetrics>();
    if (j.contains("baseline") && !j.at("baseline").is_null()) {
      const auto& b = j.at("baseline");
      r.baseline = BaselineComparison{b.at("name").get<std::string>(),
                                      b.at("metrics").get<TaskMetrics>(),
                                      b.at("delta_g").get<double>()};
    }
    r.config = j.at("config");
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("report: malformed JSON: ") + e.what());
  }
}

void RunReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("report: cannot write '" + path + "'");
  out << to_json().dump(2) << '\n';
}

RunReport RunReport::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("report: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("report: invalid JSON in '" + path + "': " + e.what());
  }
  return from_json(j);
}

}  // namespace pamm::harness
