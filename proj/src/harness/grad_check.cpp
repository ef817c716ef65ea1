#include "pamm/harness/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pamm/experts.hpp"
#include "pamm/harness/parallel.hpp"
#include "pamm/ops.hpp"

namespace pamm::harness {

namespace {

constexpr std::uint64_t kModelStream = 11;
constexpr std::uint64_t kProbeStream = 21;
constexpr std::uint64_t kCoordStream = 22;
constexpr int kMaxHalvings = 4;

// Random order of all coordinates; the first `count` are checked and the rest
// are replacements.
std::vector<std::size_t> coordinate_order(std::size_t numel, Rng rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = numel; i > 1; --i) {
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.below(i))]);
  }
  return idx;
}

GroupCheck check_group(GradCheckProblem& problem, std::size_t i, const GradCheckSettings& gc,
                       const std::vector<bool>& base_masks) {
  auto& p = problem.params[i];
  GroupCheck group{p.name, p.tensor.numel(), 0, 0, 0.0, 0.0};
  const auto grad = p.tensor.grad();
  std::vector<double> analytic(p.tensor.numel(), 0.0);
  std::copy(grad.begin(), grad.end(), analytic.begin());
  for (double a : analytic) {
    if (!std::isfinite(a)) throw NumericError("grad-check: non-finite gradient in " + p.name);
  }

  auto w = p.tensor.mutable_values();
  SelectionRecorder recorder;
  bool selection_changed = false;
  const auto order = coordinate_order(p.tensor.numel(), Rng(gc.seed, kCoordStream).derive(i));
  for (std::size_t k : order) {
    if (group.checked >= gc.coords_per_group) break;
    const double orig = w[k];
    auto at = [&](double offset) {
      w[k] = orig + offset;
      recorder.clear();
      const double v = problem.loss().item();
      if (recorder.masks() != base_masks) selection_changed = true;
      return v;
    };
    double h = gc.step;
    double numeric = 0.0;
    bool smooth = false;
    for (int attempt = 0; attempt <= kMaxHalvings && !smooth; ++attempt, h *= 0.5) {
      selection_changed = false;
      numeric = gc.five_point
                    ? (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
                    : (at(h) - at(-h)) / (2.0 * h);
      smooth = !selection_changed;
    }
    w[k] = orig;
    if (!smooth) {
      ++group.kinked;
      continue;
    }
    ++group.checked;
    group.max_rel_error = std::max(group.max_rel_error, relative_error(analytic[k], numeric));
    group.max_abs_error = std::max(group.max_abs_error, std::abs(analytic[k] - numeric));
  }
  return group;
}

}  // namespace

nlohmann::json GradCheckResult::to_json() const {
  nlohmann::json groups_json = nlohmann::json::array();
  for (const auto& g : groups) {
    groups_json.push_back({{"name", g.name},
                           {"numel", g.numel},
                           {"checked", g.checked},
                           {"kinked", g.kinked},
                           {"max_rel_error", g.max_rel_error},
                           {"max_abs_error", g.max_abs_error}});
  }
  return {{"passed", passed},
          {"tolerance", tolerance},
          {"max_rel_error", max_rel_error},
          {"groups", groups_json}};
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

Tensor probe_loss(const std::vector<Tensor>& predictions, std::uint64_t seed) {
  const Rng root(seed, kProbeStream);
  Tensor total;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    Rng rng = root.derive(t);
    const Tensor probe =
        Tensor::from(predictions[t].shape(), rng.normal_vector(predictions[t].numel()));
    Tensor term = sum(mul(predictions[t], probe));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

GradCheckResult check_gradients(const ProblemFactory& make, const GradCheckSettings& gc,
                                std::size_t threads) {
  const std::size_t groups = make().params.size();
  threads = std::max<std::size_t>(1, std::min(threads, groups));
  std::vector<GroupCheck> checks(groups);
  parallel_for(threads, threads, [&](std::size_t worker) {
    GradCheckProblem problem = make();
    for (auto& p : problem.params) p.tensor.zero_grad();
    std::vector<bool> base_masks;
    {
      SelectionRecorder recorder;
      backward(problem.loss());
      base_masks = recorder.masks();
    }
    for (std::size_t i = worker; i < groups; i += threads) {
      checks[i] = check_group(problem, i, gc, base_masks);
    }
  });

  GradCheckResult result;
  result.tolerance = gc.tolerance;
  result.groups = std::move(checks);
  result.passed = true;
  for (const auto& g : result.groups) {
    result.max_rel_error = std::max(result.max_rel_error, g.max_rel_error);
    if (g.checked == 0 && g.numel > 0) result.passed = false;
  }
  result.passed = result.passed && result.max_rel_error < gc.tolerance;
  return result;
}

GradCheckResult run_grad_check(const Config& config) {
  config.validate();
  const auto& gc = config.grad_check;
  if (gc.training && config.model.pame.expert.noise && config.model.pame.expert.use_experts) {
    throw ConfigError(
        "grad-check: training-mode forward with routing noise is stochastic; "
        "set experts.noise=false or grad_check.training=false");
  }
  const SyntheticSample sample =
      make_sample(config.data.kind, config.data.seed, 0, config.data.shape);
  const ProblemFactory make = [&]() {
    Rng model_rng(config.train.seed, kModelStream);
    auto model = std::make_shared<PammModel>(PammModel::create(model_rng, config.model));
    GradCheckProblem problem{model->parameters(), {}};
    problem.loss = [model, &sample, &gc]() {
      return probe_loss(model->forward(sample.image, gc.training, nullptr), gc.seed);
    };
    return problem;
  };
  return check_gradients(make, gc, config.train.threads);
}

}  // namespace pamm::harness
