#pragma once

#include <string>

#include "pamm/harness/config.hpp"
#include "pamm/harness/report.hpp"
#include "pamm/harness/train.hpp"

namespace pamm::harness {

enum class Toggle {
  kExperts,     // pe: static projections instead of the expert mixture
  kPriors,      // pp: no per-task parameter priors
  kDirections,  // mdhs-dirs: single scan direction
  kTopK,        // topk: dense mixture over all experts
};

Toggle toggle_from_string(const std::string& s);
std::string to_string(Toggle t);

// Config with the component named by `t` removed or reduced.
Config apply_toggle(Config config, Toggle t);

struct AblationResult {
  Toggle toggle;
  RunReport full;
  RunReport variant;
  double delta_g = 0.0;  // full measured against the variant
};

AblationResult run_ablation(const Config& config, Toggle t, const ProgressFn& progress = {});

}  // namespace pamm::harness
