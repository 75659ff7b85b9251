#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "onetracker/optim.hpp"
#include "onetracker/ops.hpp"
#include "test_util.hpp"

using namespace onetracker;
namespace O = onetracker::ops;
using ot_test::bits_equal;
using ot_test::rand_tensor;

namespace {

Parameter make_param(const std::string& name, Tensor t, bool frozen = false) {
  return Parameter{std::move(t), name, frozen};
}

void set_grad(Parameter& p, double g) {
  Tensor loss = O::sum(O::mul_scalar(p.tensor, g));
  backward(loss);
}

}  // namespace

TEST_CASE("zero gradient leaves the parameter unchanged") {
  Parameter w = make_param("w", Tensor({1}, {1.0}));
  set_grad(w, 0.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  opt.add_group({&w}, 0.1);
  opt.step();
  CHECK(w.tensor.at(0) == 1.0);
}

TEST_CASE("frozen parameters never move") {
  Parameter w = make_param("w", Tensor({2}, {0.5, -0.5}), /*frozen=*/true);
  // a frozen parameter has requires_grad off; hand it a grad buffer anyway
  w.tensor.set_requires_grad(true);
  set_grad(w, 3.0);
  w.tensor.set_requires_grad(false);
  w.frozen = true;
  AdamW opt({0.9, 0.999, 1e-8, 1e-4});
  opt.add_group({&w}, 0.1);
  opt.step();
  CHECK(w.tensor.at(0) == 0.5);
  CHECK(w.tensor.at(1) == -0.5);
  CHECK(opt.moment_count() == 0);  // no slots for frozen params
}

TEST_CASE("hand-evaluated first AdamW step") {
  // w=0, grad=1, lr=0.1, betas (0.9, 0.999), eps 1e-8, wd=0 -> w ~ -0.1
  Parameter w = make_param("w", Tensor({1}, {0.0}));
  set_grad(w, 1.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  opt.add_group({&w}, 0.1);
  opt.step();
  CHECK(w.tensor.at(0) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("learning rate zero is a bitwise identity") {
  Rng rng(5);
  Parameter a = make_param("a", rand_tensor({3, 3}, rng));
  Parameter b = make_param("b", rand_tensor({7}, rng));
  Tensor a0 = a.tensor.detached_copy();
  Tensor b0 = b.tensor.detached_copy();
  AdamW opt({0.9, 0.999, 1e-8, 1e-4});
  opt.add_group({&a, &b}, 0.0);
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    set_grad(a, 1.7);
    set_grad(b, -0.3);
    opt.step();
  }
  CHECK(bits_equal(a.tensor, a0));
  CHECK(bits_equal(b.tensor, b0));
}

TEST_CASE("missing gradient on a trainable parameter is an error") {
  Parameter w = make_param("encoder.w", Tensor({2}, {1.0, 2.0}));
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  opt.add_group({&w}, 0.1);
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("encoder.w"), std::runtime_error);
}

TEST_CASE("weight decay is decoupled and scaled by the learning rate") {
  Parameter w = make_param("w", Tensor({1}, {2.0}));
  set_grad(w, 0.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.5});
  opt.add_group({&w}, 0.1);
  opt.step();
  // grad 0 -> update is only -lr*wd*w = -0.1*0.5*2
  CHECK(w.tensor.at(0) == doctest::Approx(2.0 - 0.1).epsilon(1e-12));
}

TEST_CASE("per-group learning rates apply independently") {
  Parameter a = make_param("a", Tensor({1}, {0.0}));
  Parameter b = make_param("b", Tensor({1}, {0.0}));
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  opt.add_group({&a}, 0.1);
  opt.add_group({&b}, 0.01);
  set_grad(a, 1.0);
  set_grad(b, 1.0);
  opt.step();
  CHECK(a.tensor.at(0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(b.tensor.at(0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("optimizer runs are deterministic") {
  auto run = [] {
    Rng rng(31);
    Parameter w = make_param("w", rand_tensor({5}, rng));
    AdamW opt({0.9, 0.999, 1e-8, 1e-4});
    opt.add_group({&w}, 0.05);
    for (int i = 0; i < 10; ++i) {
      opt.zero_grad();
      Tensor loss = O::sum(O::mul(w.tensor, w.tensor));
      backward(loss);
      opt.step();
    }
    return std::vector<double>(w.tensor.data().begin(), w.tensor.data().end());
  };
  CHECK(run() == run());
}
