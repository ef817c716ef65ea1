#include "pamm/nn.hpp"

#include <cmath>

#include "pamm/ops.hpp"

namespace pamm {

Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  auto n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), rng.uniform_vector(n, -bound, bound));
}

Tensor init_constant(Shape shape, double value) {
  auto n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, value));
}

Linear Linear::create(Rng& rng, std::size_t in, std::size_t out) {
  Linear l;
  l.weight = init_uniform(rng, {out, in}, in);
  l.bias = init_uniform(rng, {out}, in);
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return {init_constant({out, in}, 0.0), init_constant({out}, 0.0)};
}

Tensor Linear::apply_map(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != in_features()) {
    throw ShapeError("linear: expected " + std::to_string(in_features()) +
                     " input channels, got " + shape_str(x.shape()));
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  Tensor flat = reshape(x, {in_features(), h * w});
  Tensor y = add_bias(matmul(weight, flat), bias);
  return reshape(y, {out_features(), h, w});
}

Tensor Linear::apply_vector(const Tensor& x) const {
  if (x.rank() != 1 || x.dim(0) != in_features()) {
    throw ShapeError("linear: expected vector of " + std::to_string(in_features()) +
                     ", got " + shape_str(x.shape()));
  }
  Tensor y = matmul(weight, reshape(x, {in_features(), 1}));
  return add_bias(reshape(y, {out_features()}), bias);
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace pamm
