#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pamm/ops.hpp"
#include "pamm/rng.hpp"
#include "pamm/tensor.hpp"

namespace pamm::test {

inline Tensor random_param(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), rng.uniform_vector(n, lo, hi));
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), rng.uniform_vector(n, lo, hi));
}

// <f(inputs), P> for a fixed random P, so every output entry matters.
inline Tensor probe(const Tensor& out, std::uint64_t seed = 99) {
  Rng rng(seed, 5);
  return sum(mul(out, Tensor::from(out.shape(), rng.normal_vector(out.numel()))));
}

// Max relative error, over every coordinate of every input, between the
// tape gradient of probe(f) and a central difference with step h.
// five_point selects the fourth-order stencil.
inline double max_fd_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double h = 1e-5, bool five_point = false) {
  for (auto& t : inputs) t.zero_grad();
  backward(probe(f()));
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto w = t.mutable_values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double orig = w[k];
      auto at = [&](double step) {
        w[k] = orig + step;
        const double v = probe(f()).item();
        w[k] = orig;
        return v;
      };
      const double numeric =
          five_point ? (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h)
                     : (at(h) - at(-h)) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    }
  }
  return worst;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return a.size() == b.size() ? m : INFINITY;
}

}  // namespace pamm::test
