#include <doctest.h>

#include <cmath>

#include "pamm/ops.hpp"
#include "test_util.hpp"

using namespace pamm;
using pamm::test::max_abs_diff;
using pamm::test::max_fd_error;
using pamm::test::random_param;
using pamm::test::random_tensor;

TEST_CASE("tensor construction and shape checks") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 6.0);
  CHECK_FALSE(t.requires_grad());
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("non-finite results are rejected") {
  Tensor big = Tensor::from({1}, {1000.0});
  CHECK_THROWS_AS(pamm::exp(big), NumericError);
  CHECK_THROWS_AS(Tensor::from({1}, {NAN}), NumericError);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    CHECK(max_abs_diff(matmul(a, eye).values(), a.values()) == 0.0);
    CHECK(max_abs_diff(matmul(eye, a).values(), a.values()) == 0.0);
  }
  SUBCASE("random 3x4 by 4x2 against triple loop") {
    Rng rng(1);
    Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 2});
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += a.at({i, k}) * b.at({k, j});
        CHECK(std::abs(c.at({i, j}) - s) < 1e-14);
      }
    }
  }
  SUBCASE("inner extents must agree") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  }
}

TEST_CASE("softmax") {
  SUBCASE("zeros are uniform") {
    Tensor s = softmax(Tensor::zeros({3}), 0);
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("large equal logits do not overflow") {
    Tensor s = softmax(Tensor::from({2}, {1000, 1000}), 0);
    CHECK(s.values()[0] == 0.5);
    CHECK(s.values()[1] == 0.5);
  }
  SUBCASE("matches exp-normalize") {
    Tensor s = softmax(Tensor::from({3}, {1, 2, 3}), 0);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(s.values()[i] - std::exp(i + 1.0) / z) < 1e-12);
    }
  }
  SUBCASE("sums to one along the reduced axis, magnitudes up to 1e3") {
    Rng rng(7);
    Tensor x = random_tensor(rng, {4, 3, 5}, -1000.0, 1000.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      Tensor s = softmax(x, axis);
      const auto& sh = x.shape();
      const std::size_t outer = axis == 0 ? 1 : (axis == 1 ? sh[0] : sh[0] * sh[1]);
      const std::size_t inner = axis == 0 ? sh[1] * sh[2] : (axis == 1 ? sh[2] : 1);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          double total = 0.0;
          for (std::size_t k = 0; k < sh[axis]; ++k) {
            total += s.values()[(o * sh[axis] + k) * inner + i];
          }
          CHECK(std::abs(total - 1.0) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("depthwise convolution") {
  SUBCASE("delta kernel is the identity") {
    Rng rng(2);
    Tensor x = random_tensor(rng, {2, 4, 5});
    std::vector<double> k(2 * 9, 0.0);
    k[4] = 1.0;
    k[9 + 4] = 1.0;
    Tensor y = depthwise_conv(x, Tensor::from({2, 3, 3}, k));
    CHECK(max_abs_diff(y.values(), x.values()) == 0.0);
  }
  SUBCASE("ones kernel on a constant map gives 9 inside") {
    Tensor y = depthwise_conv(Tensor::full({1, 5, 5}, 1.0), Tensor::full({1, 3, 3}, 1.0));
    for (std::size_t r = 1; r < 4; ++r) {
      for (std::size_t c = 1; c < 4; ++c) CHECK(y.at({0, r, c}) == 9.0);
    }
    CHECK(y.at({0, 0, 0}) == 4.0);
  }
  SUBCASE("random 2x5x5 against sliding window") {
    Rng rng(3);
    Tensor x = random_tensor(rng, {2, 5, 5}), k = random_tensor(rng, {2, 3, 3});
    Tensor y = depthwise_conv(x, k);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
          double s = 0.0;
          for (int i = -1; i <= 1; ++i) {
            for (int j = -1; j <= 1; ++j) {
              const int rr = r + i, cc = c + j;
              if (rr < 0 || rr >= 5 || cc < 0 || cc >= 5) continue;
              s += x.at({ch, std::size_t(rr), std::size_t(cc)}) *
                   k.at({ch, std::size_t(i + 1), std::size_t(j + 1)});
            }
          }
          CHECK(std::abs(y.at({ch, std::size_t(r), std::size_t(c)}) - s) < 1e-14);
        }
      }
    }
  }
  SUBCASE("even kernels are rejected") {
    CHECK_THROWS_AS(depthwise_conv(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 2, 2})),
                    ShapeError);
  }
}

TEST_CASE("conv2d against nested loops") {
  Rng rng(4);
  Tensor x = random_tensor(rng, {2, 6, 6}), w = random_tensor(rng, {3, 2, 2, 2});
  Tensor y = conv2d(x, w, 2, 0);
  REQUIRE(y.shape() == Shape{3, 3, 3});
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t b = 0; b < 2; ++b) {
              s += x.at({i, 2 * r + a, 2 * c + b}) * w.at({o, i, a, b});
            }
          }
        }
        CHECK(std::abs(y.at({o, r, c}) - s) < 1e-14);
      }
    }
  }
}

TEST_CASE("global pooling") {
  CHECK(global_pool(Tensor::full({2, 3, 3}, 1.5)).values()[1] == 1.5);
  CHECK(global_pool(Tensor::from({1, 1, 1}, {-2.0})).item() == -2.0);
  CHECK(global_pool(Tensor::from({1, 2, 2}, {1, 2, 3, 4})).item() == 2.5);
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives ones") {
    Tensor x = Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares") {
    Tensor x = Tensor::parameter({2}, {1.0, -2.0});
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == -4.0);
  }
  SUBCASE("gradients accumulate until zero_grad") {
    Tensor x = Tensor::parameter({1}, {3.0});
    backward(sum(x));
    backward(sum(x));
    CHECK(x.grad()[0] == 2.0);
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
  }
  SUBCASE("shared subexpressions") {
    Tensor x = Tensor::parameter({1}, {3.0});
    Tensor y = mul(x, x);
    backward(sum(add(y, y)));
    CHECK(x.grad()[0] == 12.0);
  }
  SUBCASE("gradient sink keeps leaves untouched") {
    Tensor x = Tensor::parameter({1}, {3.0});
    GradSink sink;
    backward(sum(scale(x, 2.0)), &sink);
    CHECK(x.grad().empty());
    CHECK(sink.grad(x)[0] == 2.0);
    sink.flush_into_leaves();
    CHECK(x.grad()[0] == 2.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    CHECK_THROWS_AS(backward(Tensor::parameter({2}, {1, 2})), ShapeError);
  }
  SUBCASE("mutable_values only on leaves") {
    Tensor x = Tensor::parameter({1}, {1.0});
    Tensor y = scale(x, 2.0);
    CHECK_THROWS(y.mutable_values());
  }
}

TEST_CASE("finite-difference gradients of every op") {
  Rng rng(11);
  constexpr double tol = 1e-4;
  Tensor a = random_param(rng, {3, 4}), b = random_param(rng, {3, 4});
  Tensor m = random_param(rng, {4, 2});
  Tensor map = random_param(rng, {2, 4, 4});
  Tensor v = random_param(rng, {3});

  CHECK(max_fd_error([&] { return add(a, b); }, {a, b}) < tol);
  CHECK(max_fd_error([&] { return sub(a, b); }, {a, b}) < tol);
  CHECK(max_fd_error([&] { return mul(a, b); }, {a, b}) < tol);
  CHECK(max_fd_error([&] { return scale(a, -1.7); }, {a}) < tol);
  CHECK(max_fd_error([&] { return pamm::exp(a); }, {a}) < tol);
  CHECK(max_fd_error([&] { return softplus(a); }, {a}) < tol);
  CHECK(max_fd_error([&] { return sigmoid(a); }, {a}) < tol);
  CHECK(max_fd_error([&] { return silu(a); }, {a}) < tol);
  CHECK(max_fd_error([&] { return gelu(a); }, {a}) < tol);
  CHECK(max_fd_error([&] { return add_bias(a, v); }, {a, v}) < tol);
  CHECK(max_fd_error([&] { return scale_by_entry(a, v, 1); }, {a, v}) < tol);
  CHECK(max_fd_error([&] { return reshape(a, {4, 3}); }, {a}) < tol);
  CHECK(max_fd_error([&] { return transpose(a); }, {a}) < tol);
  CHECK(max_fd_error(
            [&] {
              const Tensor parts[] = {a, b};
              return concat(parts);
            },
            {a, b}) < tol);
  CHECK(max_fd_error([&] { return slice(a, 2); }, {a}) < tol);
  const std::size_t cols[] = {3, 0, 0, 2};
  CHECK(max_fd_error([&] { return gather_columns(a, cols); }, {a}) < tol);
  CHECK(max_fd_error([&] { return sum(a); }, {a}) < tol);
  CHECK(max_fd_error([&] { return mean(a); }, {a}) < tol);
  CHECK(max_fd_error([&] { return matmul(a, m); }, {a, m}) < tol);
  CHECK(max_fd_error([&] { return softmax(a, 0); }, {a}) < tol);
  CHECK(max_fd_error([&] { return softmax(a, 1); }, {a}) < tol);
  CHECK(max_fd_error([&] { return global_pool(map); }, {map}) < tol);

  Tensor w = random_param(rng, {4, 4});
  CHECK(max_fd_error([&] { return scale_positions(map, w); }, {map, w}) < tol);
  Tensor dk = random_param(rng, {2, 3, 3});
  CHECK(max_fd_error([&] { return depthwise_conv(map, dk); }, {map, dk}) < tol);
  Tensor cw = random_param(rng, {3, 2, 3, 3});
  CHECK(max_fd_error([&] { return conv2d(map, cw, 1, 1); }, {map, cw}) < tol);
  CHECK(max_fd_error([&] { return conv2d(map, cw, 2, 1); }, {map, cw}) < tol);

  Tensor logits = random_param(rng, {3, 2, 2});
  const int labels[] = {0, 2, 1, 1};
  CHECK(max_fd_error([&] { return cross_entropy(logits, labels); }, {logits}) < tol);
  Tensor target = random_tensor(rng, {3, 2, 2});
  CHECK(max_fd_error([&] { return l1_loss(logits, target); }, {logits}) < tol);
}

TEST_CASE("cross-entropy value") {
  Tensor logits = Tensor::from({2, 1, 1}, {0.0, 0.0});
  const int labels[] = {1};
  CHECK(cross_entropy(logits, labels).item() == doctest::Approx(std::log(2.0)));
  const int bad[] = {2};
  CHECK_THROWS_AS(cross_entropy(logits, bad), ShapeError);
}
