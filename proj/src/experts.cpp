#include "pamm/experts.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "pamm/ops.hpp"

namespace pamm {

ExpertBank ExpertBank::create(Rng& rng, std::size_t count, std::size_t in,
                              std::size_t out) {
  return {init_uniform(rng, {count, out, in}, in), init_uniform(rng, {count, out}, in)};
}

ExpertBank ExpertBank::zeros(std::size_t count, std::size_t in, std::size_t out) {
  return {init_constant({count, out, in}, 0.0), init_constant({count, out}, 0.0)};
}

Tensor ExpertBank::expert(const Tensor& x, std::size_t j) const {
  if (x.rank() != 3 || x.dim(0) != in_features()) {
    throw ShapeError("expert: expected " + std::to_string(in_features()) +
                     " channels, got " + shape_str(x.shape()));
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  Tensor flat = reshape(x, {in_features(), h * w});
  Tensor y = add_bias(matmul(slice(weight, j), flat), slice(bias, j));
  return reshape(y, {out_features(), h, w});
}

void ExpertBank::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

TaskRouter TaskRouter::create(Rng& rng, std::size_t task_id, std::size_t in,
                              std::size_t experts) {
  const std::size_t quarter = std::max<std::size_t>(1, in / 4);
  TaskRouter r;
  r.task_id = task_id;
  r.channel_proj = Linear::create(rng, in, quarter);
  r.pooled_proj = Linear::create(rng, in, quarter);
  r.gate_proj = Linear::create(rng, 2 * quarter, experts);
  r.noise_proj = Linear::create(rng, 2 * quarter, experts);
  return r;
}

void TaskRouter::collect(const std::string& prefix, ParameterList& out) const {
  channel_proj.collect(prefix + ".channel_proj", out);
  pooled_proj.collect(prefix + ".pooled_proj", out);
  gate_proj.collect(prefix + ".gate_proj", out);
  noise_proj.collect(prefix + ".noise_proj", out);
}

ParamPrior ParamPrior::zeros(std::size_t task_id, std::size_t state) {
  return {task_id, init_constant({state}, 0.0)};
}

Routing route(const Tensor& x, const TaskRouter& router) {
  if (x.rank() != 3 || x.dim(0) != router.in_features()) {
    throw ShapeError("route: router expects " + std::to_string(router.in_features()) +
                     " channels, got " + shape_str(x.shape()));
  }
  Tensor channel = global_pool(router.channel_proj.apply_map(x));
  Tensor spatial = router.pooled_proj.apply_vector(global_pool(x));
  const Tensor parts[] = {channel, spatial};
  Tensor features = concat(parts);
  Routing r;
  r.gates = softmax(gelu(router.gate_proj.apply_vector(features)), 0);
  r.noise_logits = router.noise_proj.apply_vector(features);
  return r;
}

namespace {
thread_local SelectionRecorder* active_recorder = nullptr;
}  // namespace

SelectionRecorder::SelectionRecorder() : previous_(active_recorder) { active_recorder = this; }

SelectionRecorder::~SelectionRecorder() { active_recorder = previous_; }

Tensor noisy_topk(const Tensor& gates, const Tensor& noise_logits, std::size_t k,
                  bool training, Rng* rng) {
  if (gates.rank() != 1) throw ShapeError("noisy_topk: gates must be a vector");
  const std::size_t experts = gates.dim(0);
  if (k < 1 || k > experts) {
    throw std::invalid_argument("noisy_topk: k=" + std::to_string(k) +
                                " outside [1, " + std::to_string(experts) + "]");
  }
  Tensor logits = gates;
  if (training && noise_logits.defined()) {
    if (noise_logits.shape() != gates.shape()) {
      throw ShapeError("noisy_topk: noise logits shape mismatch");
    }
    if (rng == nullptr) throw std::invalid_argument("noisy_topk: training noise needs an rng");
    Tensor draws = Tensor::from({experts}, rng->normal_vector(experts));
    logits = add(gates, mul(draws, softplus(noise_logits)));
  }
  Tensor probs = softmax(logits, 0);
  if (k == experts) return probs;

  auto pv = probs.values();
  std::vector<std::size_t> order(experts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pv[a] > pv[b]; });
  std::vector<double> keep(experts, 0.0);
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = 1.0;
  if (active_recorder != nullptr) {
    for (double kv : keep) active_recorder->masks_.push_back(kv != 0.0);
  }
  return mul(probs, Tensor::from({experts}, std::move(keep)));
}

Tensor mixture(const Tensor& x, const Tensor& weights, const ExpertBank& bank) {
  if (weights.rank() != 1 || weights.dim(0) != bank.count()) {
    throw ShapeError("mixture: weights " + shape_str(weights.shape()) + " for " +
                     std::to_string(bank.count()) + " experts");
  }
  auto rv = weights.values();
  Tensor total;
  for (std::size_t j = 0; j < bank.count(); ++j) {
    if (rv[j] == 0.0) continue;
    Tensor term = scale_by_entry(bank.expert(x, j), weights, j);
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) {
    total = Tensor::zeros({bank.out_features(), x.dim(1), x.dim(2)});
  }
  return total;
}

Tensor pe_forward(const Tensor& x, const TaskRouter& router,
                  const ExpertBank& bank, const Linear& base_proj,
                  const ExpertSettings& settings, bool training, Rng* rng) {
  Tensor linear = base_proj.apply_map(x);
  if (!settings.use_experts) return linear;
  Routing r = route(x, router);
  Tensor weights = noisy_topk(r.gates, settings.noise ? r.noise_logits : Tensor{},
                              settings.top_k, training, rng);
  return add(mixture(x, weights, bank), linear);
}

Tensor add_prior(const Tensor& y_pe, const ParamPrior& prior) {
  if (y_pe.rank() != 3 || prior.values.rank() != 1 ||
      prior.values.dim(0) != y_pe.dim(0)) {
    throw ShapeError("add_prior: prior " + shape_str(prior.values.shape()) +
                     " does not match " + shape_str(y_pe.shape()));
  }
  return add_bias(y_pe, prior.values);
}

}  // namespace pamm
