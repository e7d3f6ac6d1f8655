#include <doctest.h>

#include <cmath>

#include "ev3/losses.hpp"
#include "ev3/optim.hpp"
#include "support.hpp"

using namespace ev3;
using ev3::testing::grad_close;
using ev3::testing::random_tensor;
using R = ParamRole;

TEST_CASE("kd loss hand values") {
  const Tensor s = Tensor::from_rows({{0.0, 0.0}});
  const Tensor t = Tensor::from_rows({{std::log(3.0), 0.0}});
  const double expected = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(std::abs(expected - 0.13081) < 5e-6);
  CHECK(std::abs(kd_loss(s, t, 1.0) - expected) <= 1e-12);

  Rng rng(3);
  const Tensor x = random_tensor(6, 5, rng);
  CHECK(kd_loss(x, x, 4.0) == 0.0);
  ad::Tape tape;
  CHECK(kd_loss(tape.leaf(x), x, 4.0).value().item() == 0.0);
}

TEST_CASE("kd loss is non-negative and scales with tau squared") {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const Tensor s = random_tensor(4, 3, rng);
    const Tensor t = random_tensor(4, 3, rng);
    CHECK(kd_loss(s, t, 2.0) >= 0.0);
    // tau^2 * KL(p_t || p_s) at tau=1 is plain KL
    double kl = 0.0;
    const Tensor ps = log_softmax(s), pt = log_softmax(t);
    for (std::size_t k = 0; k < pt.size(); ++k) kl += std::exp(pt[k]) * (pt[k] - ps[k]);
    CHECK(std::abs(kd_loss(s, t, 1.0) - kl / 4.0) <= 1e-12);
  }
  CHECK_THROWS_AS(kd_loss(Tensor(2, 3), Tensor(3, 3), 1.0), DimensionError);
  CHECK_THROWS_AS(kd_loss(Tensor(2, 3), Tensor(2, 3), 0.0), ContractError);
}

TEST_CASE("kd and ce gradients match finite differences") {
  Rng rng(12);
  const Tensor s0 = random_tensor(5, 4, rng);
  const Tensor t0 = random_tensor(5, 4, rng);
  const std::vector<int> labels{0, 3, 1, 1, 2};
  for (int which = 0; which < 2; ++which) {
    auto f = [&](const Tensor& s) { return which == 0 ? kd_loss(s, t0, 4.0) : ce_loss(s, labels); };
    ad::Tape tape;
    const ad::Var s = tape.leaf(s0);
    const ad::Var loss = which == 0 ? kd_loss(s, t0, 4.0) : ce_loss(s, labels);
    CHECK(loss.value().item() == doctest::Approx(f(s0)).epsilon(1e-14));
    const Tensor g = tape.backward(loss).of(s);
    Tensor probe = s0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double orig = probe[i];
      probe[i] = orig + 1e-5;
      const double up = f(probe);
      probe[i] = orig - 1e-5;
      const double down = f(probe);
      probe[i] = orig;
      CHECK(grad_close(g[i], (up - down) / 2e-5));
    }
  }
}

TEST_CASE("ce loss") {
  const std::vector<int> labels{0, 2, 1};
  CHECK(ce_loss(Tensor(3, 5), labels) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  CHECK(ce_loss(Tensor::from_rows({{1000, 0, 0}}), std::vector<int>{0}) < 1e-12);

  Rng rng(6);
  const Tensor x = random_tensor(3, 4, rng);
  const std::vector<int> y{3, 0, 2};
  const Tensor ls = log_softmax(x);
  const double direct = -(ls(0, 3) + ls(1, 0) + ls(2, 2)) / 3.0;
  CHECK(std::abs(ce_loss(x, y) - direct) <= 1e-12);
  const auto per = ce_loss_per_example(x, y);
  CHECK(per.size() == 3);
  CHECK(std::abs(per[1] + ls(1, 0)) <= 1e-15);

  CHECK_THROWS_AS(ce_loss(x, std::vector<int>{0, 4, 1}), ContractError);
  CHECK_THROWS_AS(ce_loss(x, std::vector<int>{0, -1, 1}), ContractError);
  CHECK_THROWS_AS(ce_loss(x, std::vector<int>{0, 1}), DimensionError);
}

TEST_CASE("evaluate and argmax ties") {
  const GraphSpec spec = ev3::testing::tiny_spec(3, 2, {{2, 1}});
  ParameterSet p = init_params(spec, 1);
  p.set({1, -1, R::HeadWeight}, Tensor(2, 2));
  p.set({1, -1, R::HeadBias}, Tensor::from_rows({{1.0, 0.0}}));
  const Tensor x(4, 3, 0.3);
  CHECK(evaluate(spec, p, x, std::vector<int>{0, 0, 0, 0}).accuracy() == 1.0);
  CHECK(evaluate(spec, p, x, std::vector<int>{1, 1, 1, 1}).accuracy() == 0.0);

  CHECK(argmax_rows(Tensor::from_rows({{2, 2, 1}, {0, 3, 3}, {5, 5, 5}})) == std::vector<int>{0, 1, 0});
  const EvalRecord r = evaluate_logits(Tensor::from_rows({{1, 1}, {0, 2}, {3, 0}}), std::vector<int>{0, 1, 1});
  CHECK(r.n == 3);
  CHECK(r.correct == 2);
  CHECK(r.per_example == std::vector<bool>{true, true, false});
  CHECK(r.accuracy() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("eval record invariants") {
  const EvalRecord r = EvalRecord::from_bits({true, false, true, true});
  CHECK(r.n == 4);
  CHECK(r.correct == 3);
  CHECK(r.accuracy() == 0.75);
  CHECK(EvalRecord::from_counts(10, 4).accuracy() == 0.4);
  CHECK_THROWS_AS(EvalRecord::from_counts(3, 4), ContractError);
}

namespace {

ParameterSet scalar_set(double v) {
  ParameterSet p;
  p.set({0, -1, R::StemWeight}, Tensor::scalar(v));
  return p;
}

double scalar_of(const ParameterSet& p) { return p.at({0, -1, R::StemWeight}).item(); }

}  // namespace

TEST_CASE("sgd step") {
  ParameterSet p;
  p.set({0, -1, R::StemWeight}, Tensor::from_rows({{1.0, -2.0, 0.5}}));
  ParameterSet g;
  g.set({0, -1, R::StemWeight}, Tensor::from_rows({{0.3, 1.0, -4.0}}));
  Optimizer sgd(OptimizerSpec::sgd(0.1));
  const ParameterSet before = p;
  const ParameterSet q = sgd.step(p, g);
  CHECK(p == before);
  const Tensor& t = q.at({0, -1, R::StemWeight});
  CHECK(t[0] == 1.0 - 0.1 * 0.3);
  CHECK(t[1] == -2.0 - 0.1 * 1.0);
  CHECK(t[2] == 0.5 - 0.1 * -4.0);

  ParameterSet zero;
  zero.set({0, -1, R::StemWeight}, Tensor(1, 3));
  CHECK(sgd.step(p, zero) == p);
  Optimizer adam(OptimizerSpec::adam(0.01));
  CHECK(adam.step(p, zero) == p);
}

TEST_CASE("adam matches the hand-iterated recurrence") {
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Optimizer adam(OptimizerSpec::adam(lr, b1, b2, eps));
  // minimize (w - 3)^2 from w = 0
  double w = 0.0, m = 0.0, v = 0.0;
  ParameterSet p = scalar_set(0.0);
  for (int t = 1; t <= 3; ++t) {
    const double g = 2.0 * (w - 3.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    w -= lr * mhat / (std::sqrt(vhat) + eps);
    p = adam.step(p, scalar_set(2.0 * (scalar_of(p) - 3.0)));
    CHECK(std::abs(scalar_of(p) - w) <= 1e-12);
  }
  CHECK(adam.step_count() == 3);
}

TEST_CASE("momentum recurrence and reset") {
  Optimizer mom(OptimizerSpec::heavy_ball(0.1, 0.5));
  ParameterSet p = scalar_set(1.0);
  p = mom.step(p, scalar_set(1.0));  // v=1, p=0.9
  CHECK(scalar_of(p) == doctest::Approx(0.9).epsilon(1e-15));
  p = mom.step(p, scalar_set(1.0));  // v=1.5, p=0.75
  CHECK(scalar_of(p) == doctest::Approx(0.75).epsilon(1e-15));
  mom.reset();
  CHECK(mom.step_count() == 0);
  p = mom.step(p, scalar_set(1.0));
  CHECK(scalar_of(p) == doctest::Approx(0.65).epsilon(1e-15));
}

TEST_CASE("optimizer rejects key mismatches and bad hyperparameters") {
  Optimizer sgd(OptimizerSpec::sgd(0.1));
  ParameterSet other;
  other.set({0, 0, R::ProjIn}, Tensor::scalar(1.0));
  CHECK_THROWS_AS(sgd.step(scalar_set(1.0), other), ContractError);
  CHECK_THROWS_AS(Optimizer(OptimizerSpec::adam(0.1, 1.0)), ContractError);
  CHECK_THROWS_AS(Optimizer(OptimizerSpec::sgd(-1.0)), ContractError);
  CHECK_THROWS_AS(Optimizer(OptimizerSpec::heavy_ball(0.1, 1.5)), ContractError);
}
