#include "pamm/decoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "pamm/ops.hpp"

namespace pamm {

StageFusion StageFusion::create(Rng& rng, std::size_t stages, std::size_t channels,
                                bool nonlinear) {
  if (stages == 0) throw std::invalid_argument("decoder: stages must be >= 1");
  const std::size_t wide = stages * channels;
  const std::size_t hidden = std::max<std::size_t>(1, wide / 2);
  return {Linear::create(rng, wide, hidden), Linear::create(rng, hidden, stages),
          nonlinear};
}

void StageFusion::collect(const std::string& prefix, ParameterList& out) const {
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

FusionResult fuse_stages(std::span<const Tensor> stages, const StageFusion& fusion) {
  if (stages.empty()) throw ShapeError("fuse_stages: no stages");
  if (stages.size() != fusion.stages()) {
    throw ShapeError("fuse_stages: " + std::to_string(stages.size()) +
                     " stages for a fusion built with " +
                     std::to_string(fusion.stages()));
  }
  for (const auto& s : stages) {
    if (s.rank() != 3 || s.shape() != stages[0].shape()) {
      throw ShapeError("fuse_stages: stage shape mismatch " + shape_str(s.shape()) +
                       " vs " + shape_str(stages[0].shape()));
    }
  }
  Tensor stacked = concat(stages);
  Tensor h = fusion.hidden.apply_map(stacked);
  if (fusion.nonlinear) h = gelu(h);
  Tensor weights = softmax(fusion.output.apply_map(h), 0);
  Tensor fused;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    Tensor term = scale_positions(stages[s], slice(weights, s));
    fused = fused.defined() ? add(fused, term) : term;
  }
  return {fused, weights};
}

ConvHead ConvHead::create(Rng& rng, std::size_t channels, std::size_t outputs) {
  return {Linear::create(rng, channels, outputs)};
}

ConvHead ConvHead::zeros(std::size_t channels, std::size_t outputs) {
  return {Linear::zeros(channels, outputs)};
}

Tensor ConvHead::apply(const Tensor& fused) const { return proj.apply_map(fused); }

void ConvHead::collect(const std::string& prefix, ParameterList& out) const {
  proj.collect(prefix, out);
}

void BackboneSettings::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("backbone: " + m); };
  if (in_channels == 0 || width == 0) fail("channels must be positive");
  if (patch_stride == 0) fail("patch_stride must be positive");
  if (taps.empty()) fail("at least one tap required");
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 1 || taps[i] > depth) {
      fail("tap " + std::to_string(taps[i]) + " outside 1..depth");
    }
    if (i > 0 && taps[i] <= taps[i - 1]) fail("taps must be strictly increasing");
  }
}

ToyBackbone ToyBackbone::create(Rng& rng, const BackboneSettings& settings) {
  settings.validate();
  const std::size_t c = settings.width, p = settings.patch_stride;
  ToyBackbone b;
  b.settings = settings;
  b.patch_weight = init_uniform(rng, {c, settings.in_channels, p, p},
                                settings.in_channels * p * p);
  b.patch_bias = init_uniform(rng, {c}, settings.in_channels * p * p);
  for (std::size_t l = 0; l < settings.depth; ++l) {
    b.mix_in.push_back(Linear::create(rng, c, c));
    b.mix_out.push_back(Linear::create(rng, c, c));
  }
  return b;
}

std::vector<Tensor> ToyBackbone::forward(const Tensor& image) const {
  const std::size_t p = settings.patch_stride;
  if (image.rank() != 3 || image.dim(0) != settings.in_channels) {
    throw ShapeError("backbone: expected [" + std::to_string(settings.in_channels) +
                     " x H x W] image, got " + shape_str(image.shape()));
  }
  if (image.dim(1) % p != 0 || image.dim(2) % p != 0 || image.dim(1) == 0 ||
      image.dim(2) == 0) {
    throw ShapeError("backbone: image " + shape_str(image.shape()) +
                     " not divisible by patch stride " + std::to_string(p));
  }
  Tensor x = add_bias(conv2d(image, patch_weight, p, 0), patch_bias);
  std::vector<Tensor> stages;
  for (std::size_t l = 0; l < settings.depth; ++l) {
    x = add(x, mix_out[l].apply_map(gelu(mix_in[l].apply_map(x))));
    if (std::find(settings.taps.begin(), settings.taps.end(), l + 1) != settings.taps.end()) {
      stages.push_back(x);
    }
  }
  return stages;
}

void ToyBackbone::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".patch_weight", patch_weight});
  out.push_back({prefix + ".patch_bias", patch_bias});
  for (std::size_t l = 0; l < mix_in.size(); ++l) {
    mix_in[l].collect(prefix + ".mix" + std::to_string(l) + ".in", out);
    mix_out[l].collect(prefix + ".mix" + std::to_string(l) + ".out", out);
  }
}

}  // namespace pamm
