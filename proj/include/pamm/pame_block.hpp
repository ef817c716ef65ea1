#pragma once

// One Parameter Aware Mamba Experts block: depthwise conv, channel
// expansion, expert/prior parameter streams for B and C, multi-directional
// Hilbert scan, SiLU gate, projection back to C channels and a residual.

#include <span>
#include <vector>

#include "pamm/experts.hpp"
#include "pamm/nn.hpp"
#include "pamm/rng.hpp"
#include "pamm/ssm.hpp"

namespace pamm {

struct PameSettings {
  std::size_t channels = 32;
  std::size_t expansion = 2;
  std::size_t state_dim = 8;
  std::size_t dw_kernel = 3;
  std::size_t tasks = 3;
  std::size_t experts = kDefaultExpertCount;
  ExpertSettings expert;
  bool share_bc_bank = false;
  bool use_priors = true;
  int directions = kScanDirections;

  std::size_t inner() const { return channels * expansion; }
  void validate() const;
};

// Everything that produces one of the B / C streams.
struct ParameterStream {
  ExpertBank bank;   // shared across tasks
  Linear base_proj;  // retained linear projection, shared across tasks
  std::vector<TaskRouter> routers;  // one per task
  std::vector<ParamPrior> priors;   // one per task
};

struct PameOutput {
  std::vector<Tensor> refined;
  std::vector<Tensor> skip;
};

class PameBlock {
 public:
  static PameBlock create(Rng& rng, const PameSettings& settings);

  PameOutput forward(std::span<const Tensor> features, bool training,
                     Rng* rng) const;
  // Single task path; `rng` (if any) is this task's noise stream.
  Tensor forward_task(const Tensor& x, std::size_t task, bool training,
                      Rng* rng) const;

  void collect(const std::string& prefix, ParameterList& out) const;

  PameSettings settings;
  Tensor dw_kernels;  // [C x k x k]
  Tensor dw_bias;     // [C]
  Linear expand;      // C -> D_inner
  Linear gate;        // C -> D_inner
  Linear project;     // D_inner -> C
  Linear delta_proj;  // D_inner -> D_inner, followed by softplus
  Tensor a_log;       // [D_inner x N]
  Tensor d_skip;      // [D_inner]
  ParameterStream b_stream;
  ParameterStream c_stream;
};

// Per-task 3x3 convolution that locally decodes backbone features.
struct TaskConv {
  Tensor weight;  // [C x C x 3 x 3]
  Tensor bias;    // [C]

  static TaskConv create(Rng& rng, std::size_t channels);
  Tensor apply(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Inverse of softplus, used to place initial timescales.
double inverse_softplus(double y);

}  // namespace pamm
