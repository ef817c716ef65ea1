#include <doctest.h>

#include <cmath>

#include "pamm/ssm.hpp"
#include "test_util.hpp"

using namespace pamm;
using pamm::test::max_abs_diff;
using pamm::test::max_fd_error;
using pamm::test::random_param;
using pamm::test::random_tensor;

namespace {

// h_k = Ā_k h_{k-1} + B̄_k x_k, y_k = <C_k, h_k> + D x_k, one step at a time.
std::vector<double> naive_scan(const Tensor& x, const Tensor& a_bar, const Tensor& b_bar,
                               const Tensor& c, const Tensor& d) {
  const std::size_t len = x.dim(0), inner = x.dim(1), state = c.dim(1);
  std::vector<double> y(len * inner, 0.0);
  for (std::size_t ch = 0; ch < inner; ++ch) {
    std::vector<double> h(state, 0.0);
    for (std::size_t l = 0; l < len; ++l) {
      double out = d.at({ch}) * x.at({l, ch});
      for (std::size_t n = 0; n < state; ++n) {
        h[n] = a_bar.at({l, ch, n}) * h[n] + b_bar.at({l, ch, n}) * x.at({l, ch});
        out += c.at({l, n}) * h[n];
      }
      y[l * inner + ch] = out;
    }
  }
  return y;
}

DiscreteParams random_discrete(Rng& rng, std::size_t len, std::size_t inner, std::size_t state) {
  Tensor a = Tensor::from({inner, state}, rng.uniform_vector(inner * state, -2.0, -0.1));
  Tensor b = random_tensor(rng, {len, state});
  Tensor delta = Tensor::from({len, inner}, rng.uniform_vector(len * inner, 0.01, 1.0));
  return discretize(a, b, delta);
}

}  // namespace

TEST_CASE("zero-order hold closed form") {
  Tensor a = Tensor::from({1, 1}, {-1.0});
  Tensor b = Tensor::from({1, 1}, {1.0});
  Tensor delta = Tensor::from({1, 1}, {1.0});
  DiscreteParams p = discretize(a, b, delta);
  CHECK(std::abs(p.a_bar.item() - 0.36788) < 1e-5);
  CHECK(std::abs(p.b_bar.item() - 0.63212) < 1e-5);
  CHECK(std::abs(p.a_bar.item() - std::exp(-1.0)) < 1e-15);
  CHECK(std::abs(p.b_bar.item() - (1.0 - std::exp(-1.0))) < 1e-15);

  SUBCASE("only the product delta * A matters for A-bar") {
    DiscreteParams q = discretize(Tensor::from({1, 1}, {-2.0}), b, Tensor::from({1, 1}, {0.5}));
    CHECK(q.a_bar.item() == p.a_bar.item());
  }
}

TEST_CASE("zero-order hold small-argument limit") {
  // A = -1, B = 1, so |delta * A| = delta.
  for (double dt : {9.99e-5, 5e-5, 1e-6, 1e-9, 1e-12}) {
    DiscreteParams p = discretize(Tensor::from({1, 1}, {-1.0}), Tensor::from({1, 1}, {1.0}),
                                  Tensor::from({1, 1}, {dt}));
    CHECK(std::abs(p.b_bar.item() - dt) < 1e-8);
    // The series agrees with expm1 where both are accurate.
    CHECK(std::abs(p.b_bar.item() - std::expm1(-dt) / -dt * dt) < 1e-15);
  }
  SUBCASE("continuous across the series threshold") {
    const double below = -kZohSeriesThreshold * (1.0 - 1e-9);
    const double above = -kZohSeriesThreshold * (1.0 + 1e-9);
    auto b_of = [](double z) {
      return discretize(Tensor::from({1, 1}, {z}), Tensor::from({1, 1}, {1.0}),
                        Tensor::from({1, 1}, {1.0}))
          .b_bar.item();
    };
    CHECK(std::abs(b_of(below) - b_of(above)) < 1e-12);
  }
}

TEST_CASE("discretize rejects invalid inputs") {
  Tensor b = Tensor::from({1, 1}, {1.0});
  CHECK_THROWS_AS(discretize(Tensor::from({1, 1}, {0.0}), b, Tensor::from({1, 1}, {1.0})),
                  NumericError);
  CHECK_THROWS_AS(discretize(Tensor::from({1, 1}, {-1.0}), b, Tensor::from({1, 1}, {0.0})),
                  NumericError);
  CHECK_THROWS_AS(discretize(Tensor::from({1, 2}, {-1.0, -1.0}), b, Tensor::from({1, 1}, {1.0})),
                  ShapeError);
}

TEST_CASE("evolution stays negative") {
  Tensor a_log = init_a_log(3, 4);
  Tensor a = evolution_from_log(a_log);
  for (std::size_t d = 0; d < 3; ++d) {
    for (std::size_t n = 0; n < 4; ++n) CHECK(a.at({d, n}) == doctest::Approx(-(n + 1.0)));
  }
}

TEST_CASE("selective scan hand cases") {
  SUBCASE("two-step unrolled recurrence") {
    DiscreteParams p{Tensor::from({2, 1, 1}, {0.5, 0.5}), Tensor::from({2, 1, 1}, {1.0, 1.0})};
    Tensor y = selective_scan(Tensor::from({2, 1}, {1.0, 1.0}), p, Tensor::from({2, 1}, {1.0, 1.0}),
                              Tensor::from({1}, {0.0}));
    CHECK(y.values()[0] == 1.0);
    CHECK(y.values()[1] == 1.5);
  }
  SUBCASE("zero evolution is memoryless") {
    Rng rng(3);
    const std::size_t len = 5, inner = 2, state = 3;
    DiscreteParams p{Tensor::zeros({len, inner, state}), random_tensor(rng, {len, inner, state})};
    Tensor x = random_tensor(rng, {len, inner}), c = random_tensor(rng, {len, state});
    Tensor d = random_tensor(rng, {inner});
    Tensor y = selective_scan(x, p, c, d);
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t ch = 0; ch < inner; ++ch) {
        double expect = d.at({ch}) * x.at({l, ch});
        for (std::size_t n = 0; n < state; ++n) {
          expect += c.at({l, n}) * p.b_bar.at({l, ch, n}) * x.at({l, ch});
        }
        CHECK(std::abs(y.at({l, ch}) - expect) < 1e-14);
      }
    }
  }
}

TEST_CASE("selective scan matches the naive recurrence") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t len = 1 + rng.below(32), inner = 1 + rng.below(4), state = 1 + rng.below(8);
    DiscreteParams p = random_discrete(rng, len, inner, state);
    Tensor x = random_tensor(rng, {len, inner}), c = random_tensor(rng, {len, state});
    Tensor d = random_tensor(rng, {inner});
    const auto expect = naive_scan(x, p.a_bar, p.b_bar, c, d);
    CHECK(max_abs_diff(selective_scan(x, p, c, d).values(), expect) < 1e-12);
  }
}

TEST_CASE("scan is linear in x for fixed parameters") {
  Rng rng(9);
  DiscreteParams p = random_discrete(rng, 12, 2, 4);
  Tensor c = random_tensor(rng, {12, 4}), d = random_tensor(rng, {2});
  Tensor x1 = random_tensor(rng, {12, 2}), x2 = random_tensor(rng, {12, 2});
  Tensor lhs = selective_scan(add(x1, scale(x2, 2.5)), p, c, d);
  Tensor rhs = add(selective_scan(x1, p, c, d), scale(selective_scan(x2, p, c, d), 2.5));
  CHECK(max_abs_diff(lhs.values(), rhs.values()) < 1e-12);
}

TEST_CASE("scan shape errors") {
  Rng rng(1);
  DiscreteParams p = random_discrete(rng, 4, 2, 3);
  CHECK_THROWS_AS(selective_scan(Tensor::zeros({5, 2}), p, Tensor::zeros({4, 3}), Tensor::zeros({2})),
                  ShapeError);
  CHECK_THROWS_AS(selective_scan(Tensor::zeros({4, 2}), p, Tensor::zeros({4, 2}), Tensor::zeros({2})),
                  ShapeError);
  CHECK_THROWS_AS(selective_scan(Tensor::zeros({4, 2}), p, Tensor::zeros({4, 3}), Tensor::zeros({3})),
                  ShapeError);
}

TEST_CASE("scan gradients w.r.t. x, B, C, delta, A-log and D") {
  Rng rng(12);
  const std::size_t len = 6, inner = 2, state = 3;
  Tensor a_log = random_param(rng, {inner, state}, -1.0, 1.0);
  Tensor b = random_param(rng, {len, state});
  Tensor c = random_param(rng, {len, state});
  Tensor delta = random_param(rng, {len, inner}, 0.05, 1.0);
  Tensor d = random_param(rng, {inner});
  Tensor x = random_param(rng, {len, inner});
  auto f = [&] { return selective_scan(x, discretize(evolution_from_log(a_log), b, delta), c, d); };
  CHECK(max_fd_error(f, {x, b, c, delta, a_log, d}) < 1e-4);

  SUBCASE("through the series branch of the hold") {
    // |A| = 5e-5 with delta near 1 keeps every delta * A below the threshold.
    Tensor small_log =
        Tensor::parameter({inner, state}, std::vector<double>(inner * state, std::log(5e-5)));
    Tensor unit = random_param(rng, {len, inner}, 0.5, 1.0);
    auto g = [&] {
      return selective_scan(x, discretize(evolution_from_log(small_log), b, unit), c, d);
    };
    CHECK(max_fd_error(g, {b, small_log, unit}) < 1e-4);
  }
}

TEST_CASE("multi-directional scan") {
  Rng rng(13);
  const std::size_t inner = 2, state = 3;
  Tensor a = Tensor::from({inner, state}, rng.uniform_vector(inner * state, -2.0, -0.1));
  Tensor d = random_tensor(rng, {inner});

  SUBCASE("zero evolution and zero C leave four skip terms") {
    const std::size_t h = 3, w = 4;
    SpatialScanParams sp{a, d, random_tensor(rng, {state, h, w}), Tensor::zeros({state, h, w}),
                         Tensor::full({inner, h, w}, 0.5)};
    Tensor x = random_tensor(rng, {inner, h, w});
    const auto& orders = scan_orders(int(h), int(w));
    Tensor y = mdhs_scan(x, serialized_params(sp), orders);
    for (std::size_t ch = 0; ch < inner; ++ch) {
      for (std::size_t p = 0; p < h * w; ++p) {
        CHECK(std::abs(y.values()[ch * h * w + p] - 4.0 * d.at({ch}) * x.values()[ch * h * w + p]) <
              1e-14);
      }
    }
  }

  SUBCASE("1x1 input: four identical length-1 scans") {
    Tensor b = random_tensor(rng, {state, 1, 1}), c = random_tensor(rng, {state, 1, 1});
    Tensor delta = Tensor::full({inner, 1, 1}, 0.3);
    Tensor x = random_tensor(rng, {inner, 1, 1});
    Tensor y = mdhs_scan(x, serialized_params({a, d, b, c, delta}), scan_orders(1, 1));
    for (std::size_t ch = 0; ch < inner; ++ch) {
      double cb = 0.0;
      for (std::size_t n = 0; n < state; ++n) {
        const double z = 0.3 * a.at({ch, n});
        cb += c.values()[n] * std::expm1(z) / z * 0.3 * b.values()[n];
      }
      const double xv = x.values()[ch];
      CHECK(std::abs(y.values()[ch] - 4.0 * (cb * xv + d.at({ch}) * xv)) < 1e-13);
    }
  }

  SUBCASE("random 2x4x4 equals four single-direction oracle passes") {
    const std::size_t h = 4, w = 4;
    Tensor b = random_tensor(rng, {state, h, w}), c = random_tensor(rng, {state, h, w});
    Tensor delta = Tensor::from({inner, h, w}, rng.uniform_vector(inner * h * w, 0.05, 0.8));
    Tensor x = random_tensor(rng, {inner, h, w});
    const auto& orders = scan_orders(int(h), int(w));
    Tensor y = mdhs_scan(x, serialized_params({a, d, b, c, delta}), orders);

    std::vector<double> expect(inner * h * w, 0.0);
    for (const auto& o : orders) {
      // Oracle: gather by the visit list, naive recurrence, scatter back.
      const std::size_t len = o.length();
      std::vector<double> xs(len * inner), bs(len * state), cs(len * state), ds(len * inner);
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t flat = std::size_t(o.visit[k].row) * w + std::size_t(o.visit[k].col);
        for (std::size_t ch = 0; ch < inner; ++ch) {
          xs[k * inner + ch] = x.values()[ch * h * w + flat];
          ds[k * inner + ch] = delta.values()[ch * h * w + flat];
        }
        for (std::size_t n = 0; n < state; ++n) {
          bs[k * state + n] = b.values()[n * h * w + flat];
          cs[k * state + n] = c.values()[n * h * w + flat];
        }
      }
      Tensor xt = Tensor::from({len, inner}, xs);
      DiscreteParams p = discretize(a, Tensor::from({len, state}, bs), Tensor::from({len, inner}, ds));
      const auto ys = naive_scan(xt, p.a_bar, p.b_bar, Tensor::from({len, state}, cs), d);
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t flat = std::size_t(o.visit[k].row) * w + std::size_t(o.visit[k].col);
        for (std::size_t ch = 0; ch < inner; ++ch) expect[ch * h * w + flat] += ys[k * inner + ch];
      }
    }
    CHECK(max_abs_diff(y.values(), expect) < 1e-12);
  }

  SUBCASE("direction order does not change the sum beyond rounding") {
    const std::size_t h = 3, w = 5;
    Tensor b = random_tensor(rng, {state, h, w}), c = random_tensor(rng, {state, h, w});
    Tensor delta = Tensor::full({inner, h, w}, 0.2);
    Tensor x = random_tensor(rng, {inner, h, w});
    const auto& orders = scan_orders(int(h), int(w));
    std::vector<ScanOrder> reversed(orders.rbegin(), orders.rend());
    auto fn = serialized_params({a, d, b, c, delta});
    CHECK(max_abs_diff(mdhs_scan(x, fn, orders).values(), mdhs_scan(x, fn, reversed).values()) <
          1e-12);
  }

  SUBCASE("gradients") {
    const std::size_t h = 3, w = 3;
    Tensor a_log = random_param(rng, {inner, state}, -0.5, 0.5);
    Tensor dp = random_param(rng, {inner});
    Tensor b = random_param(rng, {state, h, w}), c = random_param(rng, {state, h, w});
    Tensor delta = random_param(rng, {inner, h, w}, 0.05, 0.8);
    Tensor x = random_param(rng, {inner, h, w});
    const auto& orders = scan_orders(int(h), int(w));
    auto f = [&] {
      return mdhs_scan(x, serialized_params({evolution_from_log(a_log), dp, b, c, delta}), orders);
    };
    CHECK(max_fd_error(f, {x, a_log, dp, b, c, delta}) < 1e-4);
  }
}
