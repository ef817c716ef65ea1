#include "pamm/pame_block.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pamm/hilbert.hpp"
#include "pamm/ops.hpp"

namespace pamm {

namespace {

constexpr double kDeltaMin = 1e-3;
constexpr double kDeltaMax = 0.1;

ParameterStream make_stream(Rng& rng, const PameSettings& s,
                            const ExpertBank* shared_bank) {
  ParameterStream stream;
  stream.bank = shared_bank ? *shared_bank
                            : ExpertBank::create(rng, s.experts, s.inner(), s.state_dim);
  stream.base_proj = Linear::create(rng, s.inner(), s.state_dim);
  for (std::size_t t = 0; t < s.tasks; ++t) {
    stream.routers.push_back(TaskRouter::create(rng, t, s.inner(), s.experts));
    stream.priors.push_back(ParamPrior::zeros(t, s.state_dim));
  }
  return stream;
}

void collect_stream(const ParameterStream& stream, const std::string& prefix,
                    bool include_bank, ParameterList& out) {
  if (include_bank) stream.bank.collect(prefix + ".bank", out);
  stream.base_proj.collect(prefix + ".base_proj", out);
  for (std::size_t t = 0; t < stream.routers.size(); ++t) {
    stream.routers[t].collect(prefix + ".router" + std::to_string(t), out);
    out.push_back({prefix + ".prior" + std::to_string(t), stream.priors[t].values});
  }
}

}  // namespace

void PameSettings::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("pame: " + m); };
  if (channels == 0) fail("channels must be positive");
  if (expansion == 0) fail("expansion must be positive");
  if (state_dim == 0) fail("state_dim must be positive");
  if (dw_kernel == 0 || dw_kernel % 2 == 0) fail("dw_kernel must be odd");
  if (tasks == 0) fail("tasks must be positive");
  if (experts == 0) fail("experts.count must be positive");
  if (expert.top_k < 1 || expert.top_k > experts) fail("experts.top_k must be in [1, experts.count]");
  if (directions < 1 || directions > kScanDirections) fail("directions must be in 1..4");
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

PameBlock PameBlock::create(Rng& rng, const PameSettings& settings) {
  settings.validate();
  const std::size_t c = settings.channels, inner = settings.inner();
  const std::size_t k = settings.dw_kernel;
  PameBlock b;
  b.settings = settings;
  b.dw_kernels = init_uniform(rng, {c, k, k}, k * k);
  b.dw_bias = init_uniform(rng, {c}, k * k);
  b.expand = Linear::create(rng, c, inner);
  b.gate = Linear::create(rng, c, inner);
  b.project = Linear::create(rng, inner, c);

  // Timescales start log-uniform in [kDeltaMin, kDeltaMax]; the input-dependent
  // part starts small so the bias dominates.
  b.delta_proj = Linear::create(rng, inner, inner);
  for (auto& w : b.delta_proj.weight.mutable_values()) w *= 0.1;
  auto bias = b.delta_proj.bias.mutable_values();
  for (auto& v : bias) {
    const double dt = std::exp(rng.uniform(std::log(kDeltaMin), std::log(kDeltaMax)));
    v = inverse_softplus(dt);
  }

  b.a_log = init_a_log(inner, settings.state_dim);
  b.d_skip = init_constant({inner}, 1.0);
  b.b_stream = make_stream(rng, settings, nullptr);
  b.c_stream = make_stream(rng, settings, settings.share_bc_bank ? &b.b_stream.bank : nullptr);
  return b;
}

Tensor PameBlock::forward_task(const Tensor& x, std::size_t task, bool training,
                               Rng* rng) const {
  if (task >= settings.tasks) throw std::out_of_range("pame: task index out of range");
  if (x.rank() != 3 || x.dim(0) != settings.channels) {
    throw ShapeError("pame: expected [" + std::to_string(settings.channels) +
                     " x H x W], got " + shape_str(x.shape()));
  }
  const int height = static_cast<int>(x.dim(1));
  const int width = static_cast<int>(x.dim(2));

  Tensor u = add_bias(depthwise_conv(x, dw_kernels), dw_bias);
  Tensor v = expand.apply_map(u);

  Rng b_rng = rng ? rng->derive(0) : Rng(0);
  Rng c_rng = rng ? rng->derive(1) : Rng(0);
  Rng* b_ptr = rng ? &b_rng : nullptr;
  Rng* c_ptr = rng ? &c_rng : nullptr;

  auto stream_map = [&](const ParameterStream& s, Rng* r) {
    Tensor y = pe_forward(v, s.routers[task], s.bank, s.base_proj, settings.expert,
                          training, r);
    return settings.use_priors ? add_prior(y, s.priors[task]) : y;
  };

  SpatialScanParams params;
  params.a = evolution_from_log(a_log);
  params.d = d_skip;
  params.b = stream_map(b_stream, b_ptr);
  params.c = stream_map(c_stream, c_ptr);
  params.delta = softplus(delta_proj.apply_map(v));

  const auto& orders = scan_orders(height, width);
  std::span<const ScanOrder> used(orders.data(), static_cast<std::size_t>(settings.directions));
  Tensor scanned = mdhs_scan(v, serialized_params(std::move(params)), used);

  Tensor gated = mul(scanned, silu(gate.apply_map(x)));
  return add(project.apply_map(gated), x);
}

PameOutput PameBlock::forward(std::span<const Tensor> features, bool training,
                              Rng* rng) const {
  if (features.size() != settings.tasks) {
    throw ShapeError("pame: expected " + std::to_string(settings.tasks) +
                     " task features, got " + std::to_string(features.size()));
  }
  for (const auto& f : features) {
    if (f.shape() != features[0].shape()) {
      throw ShapeError("pame: task features disagree in shape: " +
                       shape_str(f.shape()) + " vs " + shape_str(features[0].shape()));
    }
  }
  PameOutput out;
  for (std::size_t t = 0; t < features.size(); ++t) {
    Rng task_rng = rng ? rng->derive(t) : Rng(0);
    out.refined.push_back(forward_task(features[t], t, training, rng ? &task_rng : nullptr));
    out.skip.push_back(features[t]);
  }
  return out;
}

void PameBlock::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".dw_kernels", dw_kernels});
  out.push_back({prefix + ".dw_bias", dw_bias});
  expand.collect(prefix + ".expand", out);
  gate.collect(prefix + ".gate", out);
  project.collect(prefix + ".project", out);
  delta_proj.collect(prefix + ".delta_proj", out);
  out.push_back({prefix + ".a_log", a_log});
  out.push_back({prefix + ".d_skip", d_skip});
  collect_stream(b_stream, prefix + ".b", true, out);
  collect_stream(c_stream, prefix + ".c", !settings.share_bc_bank, out);
}

TaskConv TaskConv::create(Rng& rng, std::size_t channels) {
  return {init_uniform(rng, {channels, channels, 3, 3}, channels * 9),
          init_uniform(rng, {channels}, channels * 9)};
}

Tensor TaskConv::apply(const Tensor& x) const {
  return add_bias(conv2d(x, weight, 1, 1), bias);
}

void TaskConv::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace pamm
