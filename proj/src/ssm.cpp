#include "pamm/ssm.hpp"

#include <cmath>
#include <string>

#include "pamm/ops.hpp"

namespace pamm {

namespace {

// phi(z) = (e^z - 1) / z and its derivative.
double zoh_phi(double z) {
  if (std::abs(z) < kZohSeriesThreshold) {
    return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0));
  }
  return std::expm1(z) / z;
}

double zoh_phi_prime(double z) {
  if (std::abs(z) < kZohSeriesThreshold) {
    return 0.5 + z * (1.0 / 3.0 + z / 8.0);
  }
  return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Tensor SSMParams::evolution() const { return evolution_from_log(a_log); }

Tensor evolution_from_log(const Tensor& a_log) { return scale(exp(a_log), -1.0); }

Tensor init_a_log(std::size_t inner, std::size_t state) {
  std::vector<double> v(inner * state);
  for (std::size_t d = 0; d < inner; ++d) {
    for (std::size_t n = 0; n < state; ++n) {
      v[d * state + n] = std::log(static_cast<double>(n + 1));
    }
  }
  return Tensor::parameter({inner, state}, std::move(v));
}

DiscreteParams discretize(const Tensor& a, const Tensor& b, const Tensor& delta) {
  require(a.rank() == 2 && b.rank() == 2 && delta.rank() == 2,
          "discretize: A [D x N], B [L x N], delta [L x D] expected");
  const std::size_t inner = a.dim(0), state = a.dim(1), len = b.dim(0);
  require(b.dim(1) == state && delta.dim(0) == len && delta.dim(1) == inner,
          "discretize: extents disagree: A " + shape_str(a.shape()) + ", B " +
              shape_str(b.shape()) + ", delta " + shape_str(delta.shape()));
  auto av = a.values(), bv = b.values(), dv = delta.values();
  for (double v : av) {
    if (!(v < 0.0)) throw NumericError("discretize: A must be negative");
  }
  for (double v : dv) {
    if (!(v > 0.0)) throw NumericError("discretize: delta must be positive");
  }

  std::vector<double> a_bar(len * inner * state), b_bar(len * inner * state);
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t d = 0; d < inner; ++d) {
      const double dt = dv[l * inner + d];
      for (std::size_t n = 0; n < state; ++n) {
        const double z = dt * av[d * state + n];
        const std::size_t i = (l * inner + d) * state + n;
        a_bar[i] = std::exp(z);
        b_bar[i] = zoh_phi(z) * dt * bv[l * state + n];
      }
    }
  }

  Shape out_shape{len, inner, state};
  Tensor a_bar_t = make_result(
      out_shape, std::move(a_bar), {a, delta},
      [a, delta, len, inner, state](detail::BackwardContext& ctx) {
        auto go = ctx.out_grad();
        auto y = ctx.out_value();
        auto ga = ctx.parent_grad(0);
        auto gd = ctx.parent_grad(1);
        auto av = a.values(), dv = delta.values();
        for (std::size_t l = 0; l < len; ++l) {
          for (std::size_t d = 0; d < inner; ++d) {
            const double dt = dv[l * inner + d];
            double acc_dt = 0.0;
            for (std::size_t n = 0; n < state; ++n) {
              const std::size_t i = (l * inner + d) * state + n;
              const double g = go[i] * y[i];
              if (!ga.empty()) ga[d * state + n] += g * dt;
              acc_dt += g * av[d * state + n];
            }
            if (!gd.empty()) gd[l * inner + d] += acc_dt;
          }
        }
      },
      "discretize.a_bar");

  Tensor b_bar_t = make_result(
      out_shape, std::move(b_bar), {a, b, delta},
      [a, b, delta, len, inner, state](detail::BackwardContext& ctx) {
        auto go = ctx.out_grad();
        auto ga = ctx.parent_grad(0);
        auto gb = ctx.parent_grad(1);
        auto gd = ctx.parent_grad(2);
        auto av = a.values(), bv = b.values(), dv = delta.values();
        for (std::size_t l = 0; l < len; ++l) {
          for (std::size_t d = 0; d < inner; ++d) {
            const double dt = dv[l * inner + d];
            double acc_dt = 0.0;
            for (std::size_t n = 0; n < state; ++n) {
              const std::size_t i = (l * inner + d) * state + n;
              const double z = dt * av[d * state + n];
              const double bn = bv[l * state + n];
              const double phi = zoh_phi(z);
              const double dphi = zoh_phi_prime(z);
              if (!ga.empty()) ga[d * state + n] += go[i] * dphi * dt * dt * bn;
              if (!gb.empty()) gb[l * state + n] += go[i] * phi * dt;
              acc_dt += go[i] * bn * (phi + z * dphi);
            }
            if (!gd.empty()) gd[l * inner + d] += acc_dt;
          }
        }
      },
      "discretize.b_bar");

  return {a_bar_t, b_bar_t};
}

Tensor selective_scan(const Tensor& x, const DiscreteParams& disc,
                      const Tensor& c, const Tensor& d) {
  require(x.rank() == 2, "selective_scan: x must be [L x D]");
  const std::size_t len = x.dim(0), inner = x.dim(1);
  require(disc.a_bar.rank() == 3 && disc.a_bar.shape() == disc.b_bar.shape() &&
              disc.a_bar.dim(0) == len && disc.a_bar.dim(1) == inner,
          "selective_scan: discrete params " + shape_str(disc.a_bar.shape()) +
              " do not match x " + shape_str(x.shape()));
  const std::size_t state = disc.a_bar.dim(2);
  require(c.rank() == 2 && c.dim(0) == len && c.dim(1) == state,
          "selective_scan: C must be [L x N], got " + shape_str(c.shape()));
  require(d.rank() == 1 && d.dim(0) == inner,
          "selective_scan: D must be [D], got " + shape_str(d.shape()));

  auto xv = x.values(), ab = disc.a_bar.values(), bb = disc.b_bar.values();
  auto cv = c.values(), dv = d.values();
  const std::size_t plane = inner * state;
  // Hidden states for every step, kept for the reverse pass.
  auto hidden = std::make_shared<std::vector<double>>(len * plane);
  std::vector<double> y(len * inner);
  std::vector<double> h(plane, 0.0);
  auto& hs = *hidden;
  for (std::size_t l = 0; l < len; ++l) {
    const double* a_row = ab.data() + l * plane;
    const double* b_row = bb.data() + l * plane;
    const double* c_row = cv.data() + l * state;
    for (std::size_t dch = 0; dch < inner; ++dch) {
      const double xin = xv[l * inner + dch];
      double* hd = h.data() + dch * state;
      double acc = 0.0;
      for (std::size_t n = 0; n < state; ++n) {
        hd[n] = a_row[dch * state + n] * hd[n] + b_row[dch * state + n] * xin;
        acc += c_row[n] * hd[n];
      }
      y[l * inner + dch] = acc + dv[dch] * xin;
    }
    std::copy(h.begin(), h.end(), hs.begin() + static_cast<std::ptrdiff_t>(l * plane));
  }

  return make_result(
      {len, inner}, std::move(y), {x, disc.a_bar, disc.b_bar, c, d},
      [x, disc, c, d, hidden, len, inner, state](detail::BackwardContext& ctx) {
        auto go = ctx.out_grad();
        auto gx = ctx.parent_grad(0);
        auto ga = ctx.parent_grad(1);
        auto gb = ctx.parent_grad(2);
        auto gc = ctx.parent_grad(3);
        auto gd = ctx.parent_grad(4);
        auto xv = x.values(), ab = disc.a_bar.values(), bb = disc.b_bar.values();
        auto cv = c.values(), dv = d.values();
        const auto& hs = *hidden;
        const std::size_t plane = inner * state;
        // gh carries dL/dh_k backwards; the contribution to h_{k-1} is Ā_k gh.
        std::vector<double> gh(plane, 0.0);
        for (std::size_t l = len; l-- > 0;) {
          const double* c_row = cv.data() + l * state;
          const double* h_row = hs.data() + l * plane;
          const double* h_prev = l > 0 ? hs.data() + (l - 1) * plane : nullptr;
          for (std::size_t dch = 0; dch < inner; ++dch) {
            const double gy = go[l * inner + dch];
            const double xin = xv[l * inner + dch];
            double gx_acc = dv[dch] * gy;
            if (!gd.empty()) gd[dch] += gy * xin;
            for (std::size_t n = 0; n < state; ++n) {
              const std::size_t i = dch * state + n;
              const std::size_t gi = l * plane + i;
              if (!gc.empty()) gc[l * state + n] += gy * h_row[i];
              gh[i] += gy * c_row[n];
              const double g = gh[i];
              gx_acc += g * bb[gi];
              if (!gb.empty()) gb[gi] += g * xin;
              if (!ga.empty() && h_prev) ga[gi] += g * h_prev[i];
              gh[i] = g * ab[gi];
            }
            if (!gx.empty()) gx[l * inner + dch] += gx_acc;
          }
        }
      },
      "selective_scan");
}

ScanParamsFn serialized_params(SpatialScanParams params) {
  return [params = std::move(params)](const ScanOrder& order) {
    SequenceParams seq;
    seq.a = params.a;
    seq.d = params.d;
    seq.b = transpose(serialize(params.b, order));
    seq.c = transpose(serialize(params.c, order));
    seq.delta = transpose(serialize(params.delta, order));
    return seq;
  };
}

Tensor mdhs_scan(const Tensor& x, const ScanParamsFn& params_fn,
                 std::span<const ScanOrder> orders) {
  require(x.rank() == 3, "mdhs_scan: x must be [D x H x W]");
  require(!orders.empty(), "mdhs_scan: at least one scan order required");
  Tensor total;
  // Fixed summation order over directions keeps results reproducible.
  for (const auto& order : orders) {
    SequenceParams p = params_fn(order);
    Tensor xs = transpose(serialize(x, order));
    DiscreteParams disc = discretize(p.a, p.b, p.delta);
    Tensor ys = selective_scan(xs, disc, p.c, p.d);
    Tensor back = deserialize(transpose(ys), order);
    total = total.defined() ? add(total, back) : back;
  }
  return total;
}

}  // namespace pamm
