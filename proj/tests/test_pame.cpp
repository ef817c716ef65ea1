#include <doctest.h>

#include <cmath>
#include <set>

#include "pamm/pame_block.hpp"
#include "pamm/ops.hpp"
#include "test_util.hpp"

using namespace pamm;
using pamm::test::max_abs_diff;
using pamm::test::random_tensor;

namespace {

PameSettings small_settings() {
  PameSettings s;
  s.channels = 4;
  s.expansion = 2;
  s.state_dim = 3;
  s.tasks = 2;
  s.experts = 5;
  s.expert.top_k = 3;
  return s;
}

}  // namespace

TEST_CASE("settings validation") {
  PameSettings s = small_settings();
  CHECK_NOTHROW(s.validate());
  s.dw_kernel = 2;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_settings();
  s.expert.top_k = 6;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_settings();
  s.directions = 5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK(PameSettings{}.inner() == 64);
}

TEST_CASE("block initialisation") {
  Rng rng(1);
  PameBlock b = PameBlock::create(rng, small_settings());
  for (double d : b.d_skip.values()) CHECK(d == 1.0);
  Tensor a = evolution_from_log(b.a_log);
  for (double v : a.values()) CHECK(v < 0.0);
  for (double v : b.delta_proj.bias.values()) {
    const double dt = std::log1p(std::exp(v));
    CHECK(dt >= 1e-3 * (1 - 1e-12));
    CHECK(dt <= 0.1 * (1 + 1e-12));
  }
  CHECK(inverse_softplus(std::log1p(std::exp(0.3))) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("block forward") {
  Rng rng(2);
  PameSettings s = small_settings();
  PameBlock b = PameBlock::create(rng, s);
  Tensor x0 = random_tensor(rng, {4, 3, 5}), x1 = random_tensor(rng, {4, 3, 5});
  const Tensor xs[] = {x0, x1};

  SUBCASE("shape is preserved and skip is the input") {
    PameOutput out = b.forward(xs, false, nullptr);
    REQUIRE(out.refined.size() == 2);
    CHECK(out.refined[0].shape() == x0.shape());
    CHECK(max_abs_diff(out.skip[1].values(), x1.values()) == 0.0);
  }
  SUBCASE("zero projection makes the block the identity") {
    for (auto& w : b.project.weight.mutable_values()) w = 0.0;
    for (auto& w : b.project.bias.mutable_values()) w = 0.0;
    PameOutput out = b.forward(xs, false, nullptr);
    CHECK(max_abs_diff(out.refined[0].values(), x0.values()) == 0.0);
    CHECK(max_abs_diff(out.refined[1].values(), x1.values()) == 0.0);
  }
  SUBCASE("tasks are isolated: a task's output ignores other tasks' priors") {
    Tensor before = b.forward_task(x0, 0, false, nullptr);
    for (auto& v : b.b_stream.priors[1].values.mutable_values()) v = 3.0;
    for (auto& v : b.c_stream.priors[1].values.mutable_values()) v = -2.0;
    Tensor after = b.forward_task(x0, 0, false, nullptr);
    CHECK(max_abs_diff(before.values(), after.values()) == 0.0);
    Tensor other = b.forward_task(x0, 1, false, nullptr);
    CHECK(max_abs_diff(before.values(), other.values()) > 0.0);
  }
  SUBCASE("single task block") {
    PameSettings one = s;
    one.tasks = 1;
    Rng r(3);
    PameBlock single = PameBlock::create(r, one);
    const Tensor only[] = {x0};
    PameOutput out = single.forward(only, false, nullptr);
    CHECK(max_abs_diff(out.refined[0].values(), single.forward_task(x0, 0, false, nullptr).values()) ==
          0.0);
  }
  SUBCASE("evaluation is deterministic; training noise follows the seed") {
    Tensor e1 = b.forward_task(x0, 0, false, nullptr);
    Tensor e2 = b.forward_task(x0, 0, false, nullptr);
    CHECK(max_abs_diff(e1.values(), e2.values()) == 0.0);
    Rng n1(9), n2(9);
    Tensor t1 = b.forward_task(x0, 0, true, &n1);
    Tensor t2 = b.forward_task(x0, 0, true, &n2);
    CHECK(max_abs_diff(t1.values(), t2.values()) == 0.0);
  }
  SUBCASE("one direction differs from four") {
    PameBlock one = b;
    one.settings.directions = 1;
    CHECK(max_abs_diff(one.forward_task(x0, 0, false, nullptr).values(),
                       b.forward_task(x0, 0, false, nullptr).values()) > 0.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(b.forward_task(x0, 2, false, nullptr), std::out_of_range);
    CHECK_THROWS_AS(b.forward_task(random_tensor(rng, {3, 3, 5}), 0, false, nullptr), ShapeError);
    const Tensor three[] = {x0, x1, x0};
    CHECK_THROWS_AS(b.forward(three, false, nullptr), ShapeError);
    const Tensor mixed[] = {x0, random_tensor(rng, {4, 2, 5})};
    CHECK_THROWS_AS(b.forward(mixed, false, nullptr), ShapeError);
  }
}

TEST_CASE("parameter collection") {
  Rng rng(4);
  PameSettings s = small_settings();
  ParameterList list;
  PameBlock::create(rng, s).collect("blk", list);
  std::set<std::string> names;
  for (const auto& p : list) names.insert(p.name);
  CHECK(names.size() == list.size());
  CHECK(names.count("blk.b.bank.weight") == 1);
  CHECK(names.count("blk.c.bank.weight") == 1);
  CHECK(names.count("blk.c.router1.gate_proj.weight") == 1);
  CHECK(names.count("blk.b.prior0") == 1);

  s.share_bc_bank = true;
  ParameterList shared;
  PameBlock b = PameBlock::create(rng, s);
  b.collect("blk", shared);
  CHECK(shared.size() == list.size() - 2);
  CHECK(b.b_stream.bank.weight.node_id() == b.c_stream.bank.weight.node_id());
}

TEST_CASE("block gradients against finite differences") {
  Rng rng(5);
  PameSettings s = small_settings();
  s.expert.top_k = s.experts;  // dense routing keeps the map smooth
  PameBlock b = PameBlock::create(rng, s);
  // Larger timescales so the state path carries a measurable signal.
  for (auto& v : b.delta_proj.bias.mutable_values()) v = inverse_softplus(0.5);
  for (auto& v : b.b_stream.priors[0].values.mutable_values()) v = rng.uniform(-0.5, 0.5);
  Tensor x = random_tensor(rng, {4, 3, 3});
  ParameterList params;
  b.collect("blk", params);
  std::vector<Tensor> tensors;
  for (const auto& p : params) {
    // Task 1's routers and priors are not on task 0's path.
    if (p.name.find("router1") != std::string::npos || p.name.find("prior1") != std::string::npos ||
        p.name.find("noise_proj") != std::string::npos) {
      continue;
    }
    tensors.push_back(p.tensor);
  }
  auto f = [&] { return b.forward_task(x, 0, false, nullptr); };
  // Router gradients are tiny here; the fourth-order stencil with a larger
  // step keeps them above rounding.
  CHECK(pamm::test::max_fd_error(f, tensors, 1e-2, true) < 1e-4);
}
