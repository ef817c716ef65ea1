#pragma once

// End-to-end multi-task network: backbone stages -> per-task convolution ->
// one PAME block per stage -> per-task stage fusion -> per-task head.

#include <vector>

#include "pamm/decoder.hpp"
#include "pamm/pame_block.hpp"

namespace pamm {

struct ModelSettings {
  BackboneSettings backbone;
  PameSettings pame;  // pame.channels is forced to backbone.width
  bool mlp_nonlinear = true;
  std::vector<std::size_t> head_channels;  // output channels per task

  std::size_t stages() const { return backbone.taps.size(); }
  void validate() const;
};

class PammModel {
 public:
  static PammModel create(Rng& rng, ModelSettings settings);

  // Per-task predictions [K_i x H x W] at stage resolution. `rng` drives
  // routing noise and is only consulted when training.
  std::vector<Tensor> forward(const Tensor& image, bool training, Rng* rng) const;

  ParameterList parameters() const;
  const ModelSettings& settings() const { return settings_; }

  ToyBackbone backbone;
  std::vector<std::vector<TaskConv>> task_convs;  // [stage][task]
  std::vector<PameBlock> blocks;                  // [stage]
  std::vector<StageFusion> fusions;               // [task]
  std::vector<ConvHead> heads;                    // [task]

 private:
  ModelSettings settings_;
};

}  // namespace pamm
