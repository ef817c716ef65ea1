#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamm/harness/config.hpp"
#include "pamm/model.hpp"

namespace pamm::harness {

struct GroupCheck {
  std::string name;
  std::size_t numel = 0;
  std::size_t checked = 0;
  // Coordinates dropped because every tried step changed a top-k selection.
  std::size_t kinked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckResult {
  std::vector<GroupCheck> groups;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  nlohmann::json to_json() const;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Smooth scalar used for gradient checks: sum over tasks of
// <prediction, fixed random probe>.
Tensor probe_loss(const std::vector<Tensor>& predictions, std::uint64_t seed);

// One independent copy of a function under test. Workers build their own so
// parameters can be perturbed concurrently.
struct GradCheckProblem {
  ParameterList params;
  std::function<Tensor()> loss;
};
using ProblemFactory = std::function<GradCheckProblem()>;

// Central differences on a random subsample of every parameter group. A
// perturbation that changes an expert selection is retried with a halved
// step; after a few halvings the coordinate is counted as kinked and replaced
// by an unused one when the group has any left. Passes when every checked
// coordinate is within tolerance and every group has a checked coordinate.
GradCheckResult check_gradients(const ProblemFactory& make, const GradCheckSettings& gc,
                                std::size_t threads = 1);

// Full model built from `config` under the probe loss. Refuses training-mode
// runs with routing noise, whose forward pass is stochastic.
GradCheckResult run_grad_check(const Config& config);

}  // namespace pamm::harness
