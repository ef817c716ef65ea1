#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pamm/harness/data.hpp"
#include "pamm/tensor.hpp"

namespace pamm::harness {

// Mean over classes present in gt of |pred ∩ gt| / |pred ∪ gt|. Pass
// concatenated maps to get a dataset-level score.
double compute_miou(std::span<const int> pred, std::span<const int> gt,
                    std::size_t classes);

double compute_rmse(std::span<const double> pred, std::span<const double> target);

// Per-position argmax over the leading (class) axis of [K x H x W] logits.
std::vector<int> argmax_classes(const Tensor& logits);

using TaskMetrics = std::map<std::string, double>;

// (100 / T) Σ_i (-1)^{l_i} (M_i - B_i) / B_i, with l_i = 1 for
// lower-is-better metrics.
double compute_delta_g(const TaskMetrics& ours, const TaskMetrics& base,
                       std::span<const TaskSpec> specs);

}  // namespace pamm::harness
