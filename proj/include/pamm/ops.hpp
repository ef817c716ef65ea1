#pragma once

// Differentiable tensor operations. All feature maps are laid out
// channel-major ([C x H x W]); sequences used by the scan are [L x D].

#include <span>
#include <vector>

#include "pamm/tensor.hpp"

namespace pamm {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

Tensor exp(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
// Exact (erf-based) Gaussian error linear unit.
Tensor gelu(const Tensor& x);

// x[c, ...] + b[c] for a tensor whose leading extent equals b's length.
Tensor add_bias(const Tensor& x, const Tensor& b);
// x[c, p] * w[p] where w has the shape of x without its leading axis.
Tensor scale_positions(const Tensor& x, const Tensor& w);
// x * v[j] for a vector tensor v.
Tensor scale_by_entry(const Tensor& x, const Tensor& v, std::size_t j);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // rank 2
// Concatenation along the leading axis; trailing extents must agree.
Tensor concat(std::span<const Tensor> parts);
// x[i, ...] along the leading axis.
Tensor slice(const Tensor& x, std::size_t i);
// out[:, k] = x[:, index[k]] for a rank-2 x.
Tensor gather_columns(const Tensor& x, std::span<const std::size_t> index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, std::size_t axis);

// Per-channel 2D convolution with zero padding (k-1)/2; k must be odd.
Tensor depthwise_conv(const Tensor& x, const Tensor& kernels);
// Dense 2D convolution, weights [C_out x C_in x k x k].
Tensor conv2d(const Tensor& x, const Tensor& weights, std::size_t stride,
              std::size_t padding);
// Spatial mean per channel: [C x H x W] -> [C].
Tensor global_pool(const Tensor& x);

// Mean pixelwise cross-entropy of logits [K x H x W] against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
// Mean absolute error.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace pamm
