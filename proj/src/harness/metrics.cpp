#include "pamm/harness/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace pamm::harness {

double compute_miou(std::span<const int> pred, std::span<const int> gt,
                    std::size_t classes) {
  if (pred.size() != gt.size()) throw std::invalid_argument("miou: size mismatch");
  std::vector<std::size_t> inter(classes, 0), pred_count(classes, 0), gt_count(classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = gt[i];
    if (p < 0 || g < 0 || static_cast<std::size_t>(p) >= classes ||
        static_cast<std::size_t>(g) >= classes) {
      throw std::invalid_argument("miou: class index out of range");
    }
    ++pred_count[static_cast<std::size_t>(p)];
    ++gt_count[static_cast<std::size_t>(g)];
    if (p == g) ++inter[static_cast<std::size_t>(p)];
  }
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (gt_count[k] == 0) continue;
    const std::size_t uni = pred_count[k] + gt_count[k] - inter[k];
    total += static_cast<double>(inter[k]) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 0.0 : total / static_cast<double>(present);
}

double compute_rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw std::invalid_argument("rmse: size mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

std::vector<int> argmax_classes(const Tensor& logits) {
  if (logits.rank() != 3) throw ShapeError("argmax_classes: expected [K x H x W]");
  const std::size_t classes = logits.dim(0), area = logits.dim(1) * logits.dim(2);
  auto v = logits.values();
  std::vector<int> out(area, 0);
  for (std::size_t p = 0; p < area; ++p) {
    double best = v[p];
    for (std::size_t k = 1; k < classes; ++k) {
      if (v[k * area + p] > best) {
        best = v[k * area + p];
        out[p] = static_cast<int>(k);
      }
    }
  }
  return out;
}

double compute_delta_g(const TaskMetrics& ours, const TaskMetrics& base,
                       std::span<const TaskSpec> specs) {
  if (specs.empty()) throw std::invalid_argument("delta_g: no tasks");
  double total = 0.0;
  for (const auto& spec : specs) {
    auto m = ours.find(spec.name);
    auto b = base.find(spec.name);
    if (m == ours.end() || b == base.end()) {
      throw std::invalid_argument("delta_g: task '" + spec.name + "' missing from a report");
    }
    if (b->second == 0.0) {
      throw std::invalid_argument("delta_g: baseline metric for '" + spec.name + "' is zero");
    }
    const double sign = spec.lower_is_better ? -1.0 : 1.0;
    total += sign * (m->second - b->second) / b->second;
  }
  return 100.0 * total / static_cast<double>(specs.size());
}

}  // namespace pamm::harness
