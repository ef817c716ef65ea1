#pragma once

// Mixture-of-experts computation of the state-space parameter streams B and
// C: shared expert projections, a routing network per task, noisy top-k
// selection, the retained linear projection, and per-task learnable priors.

#include <cstddef>
#include <optional>
#include <vector>

#include "pamm/nn.hpp"
#include "pamm/rng.hpp"
#include "pamm/tensor.hpp"

namespace pamm {

inline constexpr std::size_t kDefaultExpertCount = 15;
inline constexpr std::size_t kDefaultTopK = 9;

// N_e per-position linear maps C_in -> N, shared by every task.
struct ExpertBank {
  Tensor weight;  // [N_e x N x C_in]
  Tensor bias;    // [N_e x N]

  static ExpertBank create(Rng& rng, std::size_t count, std::size_t in,
                           std::size_t out);
  static ExpertBank zeros(std::size_t count, std::size_t in, std::size_t out);

  std::size_t count() const { return weight.dim(0); }
  std::size_t in_features() const { return weight.dim(2); }
  std::size_t out_features() const { return weight.dim(1); }

  // E_j(x): [C_in x H x W] -> [N x H x W]
  Tensor expert(const Tensor& x, std::size_t j) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Gating network owned by one task.
struct TaskRouter {
  std::size_t task_id = 0;
  Linear channel_proj;  // C_in -> C_in/4, per position, then pooled
  Linear pooled_proj;   // C_in -> C_in/4, after pooling
  Linear gate_proj;     // C_in/2 -> N_e
  Linear noise_proj;    // C_in/2 -> N_e

  static TaskRouter create(Rng& rng, std::size_t task_id, std::size_t in,
                           std::size_t experts);

  std::size_t in_features() const { return channel_proj.in_features(); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct Routing {
  Tensor gates;         // softmax(gelu(gate_proj(f_r))), [N_e]
  Tensor noise_logits;  // noise_proj(f_r), [N_e]
};

// Spatially invariant learnable vector added to one parameter stream.
struct ParamPrior {
  std::size_t task_id = 0;
  Tensor values;  // [N]

  static ParamPrior zeros(std::size_t task_id, std::size_t state);
};

Routing route(const Tensor& x, const TaskRouter& router);

// While alive, collects the keep-mask of every truncating noisy_topk call made
// on the constructing thread. Lets callers notice when a perturbation changes
// a discrete expert selection.
class SelectionRecorder {
 public:
  SelectionRecorder();
  ~SelectionRecorder();
  SelectionRecorder(const SelectionRecorder&) = delete;
  SelectionRecorder& operator=(const SelectionRecorder&) = delete;

  const std::vector<bool>& masks() const { return masks_; }
  void clear() { masks_.clear(); }

 private:
  std::vector<bool> masks_;
  SelectionRecorder* previous_;
  friend Tensor noisy_topk(const Tensor&, const Tensor&, std::size_t, bool, Rng*);
};

// R = TopK(softmax(gates + n ∘ softplus(noise_logits))). Noise is drawn from
// `rng` only when training and noise_logits is defined. Survivors are not
// renormalised.
Tensor noisy_topk(const Tensor& gates, const Tensor& noise_logits, std::size_t k,
                  bool training, Rng* rng);

// Σ_j R_j E_j(x); experts with R_j == 0 are skipped.
Tensor mixture(const Tensor& x, const Tensor& weights, const ExpertBank& bank);

struct ExpertSettings {
  std::size_t top_k = kDefaultTopK;
  bool noise = true;        // add routing noise in training mode
  bool use_experts = true;  // false leaves only the linear projection
};

// mixture(x, noisy_topk(route(x))) + base_proj(x)
Tensor pe_forward(const Tensor& x, const TaskRouter& router,
                  const ExpertBank& bank, const Linear& base_proj,
                  const ExpertSettings& settings, bool training, Rng* rng);

// y_pe + prior broadcast over every spatial position.
Tensor add_prior(const Tensor& y_pe, const ParamPrior& prior);

}  // namespace pamm
