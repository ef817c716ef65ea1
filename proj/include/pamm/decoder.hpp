#pragma once

// Multi-stage fusion decoder, convolutional heads and the toy backbone.

#include <span>
#include <vector>

#include "pamm/nn.hpp"
#include "pamm/rng.hpp"
#include "pamm/tensor.hpp"

namespace pamm {

// Per-task perceptron producing softmax stage weights at every position.
struct StageFusion {
  Linear hidden;  // S*C -> S*C/2
  Linear output;  // S*C/2 -> S
  bool nonlinear = true;

  static StageFusion create(Rng& rng, std::size_t stages, std::size_t channels,
                            bool nonlinear = true);
  std::size_t stages() const { return output.out_features(); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct FusionResult {
  Tensor fused;    // [C x H x W]
  Tensor weights;  // [S x H x W], sums to 1 over the stage axis
};

FusionResult fuse_stages(std::span<const Tensor> stages, const StageFusion& fusion);

// 1x1 convolution to the task's output channels.
struct ConvHead {
  Linear proj;

  static ConvHead create(Rng& rng, std::size_t channels, std::size_t outputs);
  static ConvHead zeros(std::size_t channels, std::size_t outputs);
  Tensor apply(const Tensor& fused) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct BackboneSettings {
  std::size_t in_channels = 3;
  std::size_t patch_stride = 4;
  std::size_t width = 32;
  std::size_t depth = 4;
  std::vector<std::size_t> taps{1, 2, 3, 4};  // 1-based layer indices

  void validate() const;
};

// Strided patch embedding followed by residual per-position channel MLPs;
// the outputs after the tapped layers are the stage features.
struct ToyBackbone {
  BackboneSettings settings;
  Tensor patch_weight;  // [C x in x p x p]
  Tensor patch_bias;    // [C]
  std::vector<Linear> mix_in;   // C -> C
  std::vector<Linear> mix_out;  // C -> C

  static ToyBackbone create(Rng& rng, const BackboneSettings& settings);
  std::vector<Tensor> forward(const Tensor& image) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace pamm
