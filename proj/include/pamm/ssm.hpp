#pragma once

// Selective state-space scan with zero-order-hold discretization.
//
// Shapes: L sequence length, D inner channels, N state size.

#include <functional>
#include <span>

#include "pamm/hilbert.hpp"
#include "pamm/tensor.hpp"

namespace pamm {

// State-space parameter bundle for one sequence.
//
//   A      [D x N]  diagonal evolution, compresses past memories; kept
//                   negative by storing log|A| (A = -exp(a_log)).
//   B      [L x N]  controls how strongly the current input is written into
//                   the hidden state.
//   C      [L x N]  reads the output back out of the hidden state.
//   D      [D]      direct skip from input to output.
//   delta  [L x D]  positive timescale; small steps keep the recurrence
//                   stable and decide how much of each input is retained.
struct SSMParams {
  Tensor a_log;
  Tensor d;
  Tensor b;
  Tensor c;
  Tensor delta;

  Tensor evolution() const;
};

// Ā, B̄ of the discrete recurrence, both [L x D x N].
struct DiscreteParams {
  Tensor a_bar;
  Tensor b_bar;
};

// Magnitude of Δ·A below which (e^z - 1)/z is evaluated by its series.
inline constexpr double kZohSeriesThreshold = 1e-4;

// A = -exp(a_log).
Tensor evolution_from_log(const Tensor& a_log);
// a_log initialised so that state channel n has A_n = -(n + 1).
Tensor init_a_log(std::size_t inner, std::size_t state);

// Zero-order hold: Ā = exp(Δ A), B̄ = (exp(Δ A) - 1)/(Δ A) · Δ B.
// Requires A < 0 and Δ > 0 elementwise.
DiscreteParams discretize(const Tensor& a, const Tensor& b, const Tensor& delta);

// h_k = Ā_k ∘ h_{k-1} + B̄_k x_k (h_0 = 0), y_k = <C_k, h_k> + D ∘ x_k.
// x is [L x D]; returns [L x D].
Tensor selective_scan(const Tensor& x, const DiscreteParams& disc,
                      const Tensor& c, const Tensor& d);

// Sequence-form parameters for one scan direction.
struct SequenceParams {
  Tensor a;      // [D x N], already negative
  Tensor d;      // [D]
  Tensor b;      // [L x N]
  Tensor c;      // [L x N]
  Tensor delta;  // [L x D]
};

using ScanParamsFn = std::function<SequenceParams(const ScanOrder&)>;

// Spatial-form parameters, serialized per direction with the input's order.
struct SpatialScanParams {
  Tensor a;      // [D x N]
  Tensor d;      // [D]
  Tensor b;      // [N x H x W]
  Tensor c;      // [N x H x W]
  Tensor delta;  // [D x H x W]
};

ScanParamsFn serialized_params(SpatialScanParams params);

// y = sum over orders of deserialize(scan(serialize(x))). x is [D x H x W].
// The D skip is applied inside each direction.
Tensor mdhs_scan(const Tensor& x, const ScanParamsFn& params_fn,
                 std::span<const ScanOrder> orders);

}  // namespace pamm
