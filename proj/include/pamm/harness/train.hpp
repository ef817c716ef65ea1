#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pamm/harness/config.hpp"
#include "pamm/harness/report.hpp"
#include "pamm/model.hpp"

namespace pamm::harness {

// Sum over tasks of the per-task loss (cross-entropy or L1).
Tensor sample_loss(const std::vector<Tensor>& predictions, const SyntheticSample& sample,
                   const std::vector<TaskSpec>& tasks);

// Dataset-level metric per task over concatenated evaluation maps.
TaskMetrics evaluate(const PammModel& model, const std::vector<SyntheticSample>& samples,
                     const std::vector<TaskSpec>& tasks, std::size_t threads = 1);

// Metrics of constant predictors fitted on `train`: the majority class for
// classification tasks, the mean target for regression tasks.
TaskMetrics trivial_metrics(const std::vector<SyntheticSample>& train,
                            const std::vector<SyntheticSample>& eval,
                            const std::vector<TaskSpec>& tasks);

class Adam {
 public:
  explicit Adam(const ParameterList& params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  // grads[i] matches params[i]; parameters are updated in place.
  void step(ParameterList& params, const std::vector<std::vector<double>>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

using ProgressFn = std::function<void(const std::string&)>;

// Builds the model from config, trains it and evaluates it. Throws
// NumericError when a loss or gradient goes non-finite.
RunReport train_and_evaluate(const Config& config, const ProgressFn& progress = {});

}  // namespace pamm::harness
