#pragma once

#include <string>
#include <vector>

#include "pamm/rng.hpp"
#include "pamm/tensor.hpp"

namespace pamm {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) leaf of the given shape.
Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in);
Tensor init_constant(Shape shape, double value);

// Affine map applied independently at every spatial position.
struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static Linear create(Rng& rng, std::size_t in, std::size_t out);
  static Linear zeros(std::size_t in, std::size_t out);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  // [in x H x W] -> [out x H x W]
  Tensor apply_map(const Tensor& x) const;
  // [in] -> [out]
  Tensor apply_vector(const Tensor& x) const;

  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace pamm
