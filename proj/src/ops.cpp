#include "pamm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pamm {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Elementwise unary op given f and f' (evaluated at the input).
template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df, const char* op) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x},
                     [x, df](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       auto xv = x.values();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += go[i] * df(xv[i]);
                       }
                     },
                     op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       for (std::size_t p = 0; p < 2; ++p) {
                         auto g = ctx.parent_grad(p);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
                       }
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto ga = ctx.parent_grad(0);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
                       auto gb = ctx.parent_grad(1);
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto ga = ctx.parent_grad(0);
                       auto bv = b.values();
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
                       auto gb = ctx.parent_grad(1);
                       auto av = a.values();
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
                     },
                     "mul");
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return s * v; },
               [s](double) { return s; }, "scale");
}

Tensor exp(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::exp(xv[i]);
  return make_result(x.shape(), std::move(out), {x},
                     [](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       auto y = ctx.out_value();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * y[i];
                     },
                     "exp");
}

Tensor softplus(const Tensor& x) {
  return unary(x, stable_softplus, logistic, "softplus");
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, logistic,
      [](double v) {
        double s = logistic(v);
        return s * (1.0 - s);
      },
      "sigmoid");
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * logistic(v); },
      [](double v) {
        double s = logistic(v);
        return s * (1.0 + v * (1.0 - s));
      },
      "silu");
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [inv_sqrt_2pi](double v) {
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      },
      "gelu");
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() < 1 || b.rank() != 1 || b.dim(0) != x.dim(0)) {
    throw ShapeError("add_bias: bias " + shape_str(b.shape()) +
                     " does not match leading extent of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0);
  const std::size_t inner = x.numel() / rows;
  auto xv = x.values(), bv = b.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = xv[r * inner + i] + bv[r];
  }
  return make_result(x.shape(), std::move(out), {x, b},
                     [rows, inner](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto gx = ctx.parent_grad(0);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
                       auto gb = ctx.parent_grad(1);
                       if (gb.empty()) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double s = 0.0;
                         for (std::size_t i = 0; i < inner; ++i) s += go[r * inner + i];
                         gb[r] += s;
                       }
                     },
                     "add_bias");
}

Tensor scale_positions(const Tensor& x, const Tensor& w) {
  if (x.rank() < 1 || Shape(x.shape().begin() + 1, x.shape().end()) != w.shape()) {
    throw ShapeError("scale_positions: weights " + shape_str(w.shape()) +
                     " do not match trailing extents of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0);
  const std::size_t inner = w.numel();
  auto xv = x.values(), wv = w.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = xv[r * inner + i] * wv[i];
  }
  return make_result(x.shape(), std::move(out), {x, w},
                     [x, w, rows, inner](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto gx = ctx.parent_grad(0);
                       if (!gx.empty()) {
                         auto wv = w.values();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t i = 0; i < inner; ++i) {
                             gx[r * inner + i] += go[r * inner + i] * wv[i];
                           }
                         }
                       }
                       auto gw = ctx.parent_grad(1);
                       if (!gw.empty()) {
                         auto xv = x.values();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t i = 0; i < inner; ++i) {
                             gw[i] += go[r * inner + i] * xv[r * inner + i];
                           }
                         }
                       }
                     },
                     "scale_positions");
}

Tensor scale_by_entry(const Tensor& x, const Tensor& v, std::size_t j) {
  if (v.rank() != 1 || j >= v.dim(0)) {
    throw ShapeError("scale_by_entry: index " + std::to_string(j) +
                     " invalid for " + shape_str(v.shape()));
  }
  const double s = v.values()[j];
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * s;
  return make_result(x.shape(), std::move(out), {x, v},
                     [x, s, j](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto gx = ctx.parent_grad(0);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * s;
                       auto gv = ctx.parent_grad(1);
                       if (gv.empty()) return;
                       auto xv = x.values();
                       double acc = 0.0;
                       for (std::size_t i = 0; i < xv.size(); ++i) acc += go[i] * xv[i];
                       gv[j] += acc;
                     },
                     "scale_by_entry");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  auto xv = x.values();
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()),
                     {x},
                     [](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
                     },
                     "reshape");
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = xv[r * cols + c];
  }
  return make_result({cols, rows}, std::move(out), {x},
                     [rows, cols](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] += go[c * rows + r];
                         }
                       }
                     },
                     "transpose");
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rank() < 1 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat: trailing extents disagree");
    }
    lead += p.dim(0);
    offsets.push_back(out.size());
    auto v = p.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  Shape shape = tail;
  shape.insert(shape.begin(), lead);
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(shape), std::move(out), inputs,
                     [offsets](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       for (std::size_t p = 0; p < offsets.size(); ++p) {
                         auto g = ctx.parent_grad(p);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[offsets[p] + i];
                       }
                     },
                     "concat");
}

Tensor slice(const Tensor& x, std::size_t i) {
  if (x.rank() < 1 || i >= x.dim(0)) {
    throw ShapeError("slice: index " + std::to_string(i) + " out of range for " +
                     shape_str(x.shape()));
  }
  Shape tail(x.shape().begin() + 1, x.shape().end());
  const std::size_t inner = shape_numel(tail);
  auto xv = x.values();
  std::vector<double> out(xv.begin() + i * inner, xv.begin() + (i + 1) * inner);
  return make_result(std::move(tail), std::move(out), {x},
                     [i, inner](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       for (std::size_t k = 0; k < inner; ++k) g[i * inner + k] += go[k];
                     },
                     "slice");
}

Tensor gather_columns(const Tensor& x, std::span<const std::size_t> index) {
  if (x.rank() != 2) throw ShapeError("gather_columns: rank-2 tensor required");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  for (auto k : index) {
    if (k >= cols) throw ShapeError("gather_columns: index out of range");
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t n = idx.size();
  auto xv = x.values();
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < n; ++k) out[r * n + k] = xv[r * cols + idx[k]];
  }
  return make_result({rows, n}, std::move(out), {x},
                     [idx, rows, cols](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       const std::size_t n = idx.size();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t k = 0; k < n; ++k) {
                           g[r * cols + idx[k]] += go[r * n + k];
                         }
                       }
                     },
                     "gather_columns");
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({}, {s}, {x},
                     [](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       const double go = ctx.out_grad()[0];
                       for (auto& v : g) v += go;
                     },
                     "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto ga = ctx.parent_grad(0);
                       if (!ga.empty()) {
                         // dA = dY * B^T
                         auto bv = b.values();
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double* brow = bv.data() + p * n;
                             const double* grow = go.data() + i * n;
                             double s = 0.0;
                             for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                             ga[i * k + p] += s;
                           }
                         }
                       }
                       auto gb = ctx.parent_grad(1);
                       if (!gb.empty()) {
                         // dB = A^T * dY
                         auto av = a.values();
                         for (std::size_t i = 0; i < m; ++i) {
                           const double* grow = go.data() + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = av[i * k + p];
                             double* gbrow = gb.data() + p * n;
                             for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                           }
                         }
                       }
                     },
                     "matmul");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  }
  return make_result(s, std::move(out), {x},
                     [outer, inner, len](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       auto y = ctx.out_value();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t in = 0; in < inner; ++in) {
                           const std::size_t base = o * len * inner + in;
                           double dot = 0.0;
                           for (std::size_t k = 0; k < len; ++k) {
                             dot += go[base + k * inner] * y[base + k * inner];
                           }
                           for (std::size_t k = 0; k < len; ++k) {
                             const std::size_t i = base + k * inner;
                             g[i] += y[i] * (go[i] - dot);
                           }
                         }
                       }
                     },
                     "softmax");
}

Tensor depthwise_conv(const Tensor& x, const Tensor& kernels) {
  if (x.rank() != 3 || kernels.rank() != 3 || kernels.dim(0) != x.dim(0) ||
      kernels.dim(1) != kernels.dim(2)) {
    throw ShapeError("depthwise_conv: kernels " + shape_str(kernels.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  const std::size_t k = kernels.dim(1);
  if (k % 2 == 0) throw ShapeError("depthwise_conv: kernel size must be odd");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const long pad = static_cast<long>(k / 2);
  auto xv = x.values(), kv = kernels.values();
  std::vector<double> out(xv.size(), 0.0);
  auto each_tap = [=](auto&& fn) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
          for (std::size_t u = 0; u < k; ++u) {
            long si = static_cast<long>(i + u) - pad;
            if (si < 0 || si >= static_cast<long>(height)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              long sj = static_cast<long>(j + v) - pad;
              if (sj < 0 || sj >= static_cast<long>(width)) continue;
              fn((c * height + i) * width + j,
                 (c * height + static_cast<std::size_t>(si)) * width +
                     static_cast<std::size_t>(sj),
                 (c * k + u) * k + v);
            }
          }
        }
      }
    }
  };
  each_tap([&](std::size_t o, std::size_t in, std::size_t w) {
    out[o] += kv[w] * xv[in];
  });
  return make_result(x.shape(), std::move(out), {x, kernels},
                     [x, kernels, each_tap](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto gx = ctx.parent_grad(0);
                       auto gk = ctx.parent_grad(1);
                       auto xv = x.values(), kv = kernels.values();
                       each_tap([&](std::size_t o, std::size_t in, std::size_t w) {
                         if (!gx.empty()) gx[in] += go[o] * kv[w];
                         if (!gk.empty()) gk[w] += go[o] * xv[in];
                       });
                     },
                     "depthwise_conv");
}

Tensor conv2d(const Tensor& x, const Tensor& weights, std::size_t stride,
              std::size_t padding) {
  if (x.rank() != 3 || weights.rank() != 4 || weights.dim(1) != x.dim(0) ||
      weights.dim(2) != weights.dim(3)) {
    throw ShapeError("conv2d: weights " + shape_str(weights.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t c_in = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t c_out = weights.dim(0), k = weights.dim(2);
  if (height + 2 * padding < k || width + 2 * padding < k) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const std::size_t out_h = (height + 2 * padding - k) / stride + 1;
  const std::size_t out_w = (width + 2 * padding - k) / stride + 1;
  const long pad = static_cast<long>(padding);
  auto xv = x.values(), wv = weights.values();
  std::vector<double> out(c_out * out_h * out_w, 0.0);

  // Visits every (output, input, weight) index triple that contributes.
  auto each_tap = [=](auto&& fn) {
    for (std::size_t co = 0; co < c_out; ++co) {
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) {
            const std::size_t w = ((co * c_in + ci) * k + u) * k + v;
            for (std::size_t i = 0; i < out_h; ++i) {
              long si = static_cast<long>(i * stride + u) - pad;
              if (si < 0 || si >= static_cast<long>(height)) continue;
              for (std::size_t j = 0; j < out_w; ++j) {
                long sj = static_cast<long>(j * stride + v) - pad;
                if (sj < 0 || sj >= static_cast<long>(width)) continue;
                fn((co * out_h + i) * out_w + j,
                   (ci * height + static_cast<std::size_t>(si)) * width +
                       static_cast<std::size_t>(sj),
                   w);
              }
            }
          }
        }
      }
    }
  };
  each_tap([&](std::size_t o, std::size_t in, std::size_t w) {
    out[o] += wv[w] * xv[in];
  });
  return make_result({c_out, out_h, out_w}, std::move(out), {x, weights},
                     [x, weights, each_tap](detail::BackwardContext& ctx) {
                       auto go = ctx.out_grad();
                       auto gx = ctx.parent_grad(0);
                       auto gw = ctx.parent_grad(1);
                       auto xv = x.values(), wv = weights.values();
                       if (!gx.empty()) {
                         each_tap([&](std::size_t o, std::size_t in, std::size_t w) {
                           gx[in] += go[o] * wv[w];
                         });
                       }
                       if (!gw.empty()) {
                         each_tap([&](std::size_t o, std::size_t in, std::size_t w) {
                           gw[w] += go[o] * xv[in];
                         });
                       }
                     },
                     "conv2d");
}

Tensor global_pool(const Tensor& x) {
  if (x.rank() != 3 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw ShapeError("global_pool: expected non-empty [C x H x W], got " +
                     shape_str(x.shape()));
  }
  const std::size_t channels = x.dim(0);
  const std::size_t area = x.dim(1) * x.dim(2);
  auto xv = x.values();
  std::vector<double> out(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < area; ++p) s += xv[c * area + p];
    out[c] = s / static_cast<double>(area);
  }
  return make_result({channels}, std::move(out), {x},
                     [channels, area](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       auto go = ctx.out_grad();
                       const double inv = 1.0 / static_cast<double>(area);
                       for (std::size_t c = 0; c < channels; ++c) {
                         for (std::size_t p = 0; p < area; ++p) g[c * area + p] += go[c] * inv;
                       }
                     },
                     "global_pool");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 3) throw ShapeError("cross_entropy: expected [K x H x W] logits");
  const std::size_t classes = logits.dim(0);
  const std::size_t area = logits.dim(1) * logits.dim(2);
  if (labels.size() != area) throw ShapeError("cross_entropy: label count mismatch");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ShapeError("cross_entropy: label out of range");
    }
  }
  auto lv = logits.values();
  std::vector<double> prob(lv.size());
  double loss = 0.0;
  for (std::size_t p = 0; p < area; ++p) {
    double mx = lv[p];
    for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, lv[k * area + p]);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      double e = std::exp(lv[k * area + p] - mx);
      prob[k * area + p] = e;
      z += e;
    }
    for (std::size_t k = 0; k < classes; ++k) prob[k * area + p] /= z;
    loss += mx + std::log(z) - lv[static_cast<std::size_t>(labels[p]) * area + p];
  }
  loss /= static_cast<double>(area);
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result({}, {loss}, {logits},
                     [prob = std::move(prob), lab = std::move(lab), classes,
                      area](detail::BackwardContext& ctx) {
                       auto g = ctx.parent_grad(0);
                       const double go = ctx.out_grad()[0] / static_cast<double>(area);
                       for (std::size_t p = 0; p < area; ++p) {
                         for (std::size_t k = 0; k < classes; ++k) {
                           double target = static_cast<std::size_t>(lab[p]) == k ? 1.0 : 0.0;
                           g[k * area + p] += go * (prob[k * area + p] - target);
                         }
                       }
                     },
                     "cross_entropy");
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  auto pv = pred.values(), tv = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += std::abs(pv[i] - tv[i]);
  const double n = static_cast<double>(pv.size());
  return make_result({}, {s / n}, {pred, target},
                     [pred, target, n](detail::BackwardContext& ctx) {
                       const double go = ctx.out_grad()[0] / n;
                       auto pv = pred.values(), tv = target.values();
                       auto gp = ctx.parent_grad(0);
                       auto gt = ctx.parent_grad(1);
                       for (std::size_t i = 0; i < pv.size(); ++i) {
                         const double d = pv[i] - tv[i];
                         const double sg = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                         if (!gp.empty()) gp[i] += go * sg;
                         if (!gt.empty()) gt[i] -= go * sg;
                       }
                     },
                     "l1_loss");
}

}  // namespace pamm
