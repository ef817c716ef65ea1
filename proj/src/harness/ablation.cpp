#include "pamm/harness/ablation.hpp"

#include <stdexcept>

namespace pamm::harness {

Toggle toggle_from_string(const std::string& s) {
  if (s == "pe") return Toggle::kExperts;
  if (s == "pp") return Toggle::kPriors;
  if (s == "mdhs-dirs") return Toggle::kDirections;
  if (s == "topk") return Toggle::kTopK;
  throw std::invalid_argument("unknown ablation toggle '" + s + "'");
}

std::string to_string(Toggle t) {
  switch (t) {
    case Toggle::kExperts: return "pe";
    case Toggle::kPriors: return "pp";
    case Toggle::kDirections: return "mdhs-dirs";
    case Toggle::kTopK: return "topk";
  }
  return "?";
}

Config apply_toggle(Config config, Toggle t) {
  auto& pame = config.model.pame;
  switch (t) {
    case Toggle::kExperts: pame.expert.use_experts = false; break;
    case Toggle::kPriors: pame.use_priors = false; break;
    case Toggle::kDirections: pame.directions = 1; break;
    case Toggle::kTopK: pame.expert.top_k = pame.experts; break;
  }
  config.baseline_path.clear();
  config.validate();
  return config;
}

AblationResult run_ablation(const Config& config, Toggle t, const ProgressFn& progress) {
  Config full_config = config;
  full_config.baseline_path.clear();
  AblationResult r{t, train_and_evaluate(full_config, progress), {}, 0.0};
  r.variant = train_and_evaluate(apply_toggle(config, t), progress);
  r.delta_g = compute_delta_g(r.full.final_metrics, r.variant.final_metrics, r.full.tasks);
  return r;
}

}  // namespace pamm::harness
