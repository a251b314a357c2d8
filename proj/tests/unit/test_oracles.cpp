#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "rtu/mlp.hpp"
#include "rtu/oracles.hpp"

using namespace rtu;
using rtu::testing::random_sequence;
using rtu::testing::random_vec;

namespace {

std::vector<double> as_flat(ParamGrad g) { return flatten(tensors(g)); }

double rel(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  return relative_error(std::span<const double>(a), std::span<const double>(b));
}

RtuParams random_rtu(Rng& rng, int n, int d, Variant v, Activation f) {
  InitOptions init;
  init.r_min = 0.3;
  init.r_max = 0.95;
  return init_rtu_params(n, d, v, f, init, rng);
}

struct OneScalar {
  double* p;
  template <typename F>
  void for_each_tensor(F&& f) {
    f("p", std::span<double>(p, 1));
  }
};

struct Case {
  Variant variant;
  Activation activation;
};

const Case kCases[] = {{Variant::kLinear, Activation::kIdentity},
                       {Variant::kLinear, Activation::kRelu},
                       {Variant::kLinear, Activation::kTanh},
                       {Variant::kNonlinear, Activation::kTanh},
                       {Variant::kNonlinear, Activation::kRelu}};

}  // namespace

TEST_CASE("finite differences on closed-form losses") {
  double p = 3.0;
  OneScalar holder{&p};
  auto fd = finite_difference_gradient(holder, [&] { return p * p; }, 1e-6);
  REQUIRE(fd.size() == 1);
  CHECK(std::abs(fd[0] - 6.0) <= 1e-6);
  CHECK(p == 3.0);

  fd = finite_difference_gradient(holder, [] { return 4.2; }, 1e-6);
  CHECK(fd[0] == 0.0);
  CHECK_THROWS_AS(finite_difference_gradient(holder, [] { return 0.0; }, 0.0),
                  Error);
}

TEST_CASE("RTU oracle triangle: RTRL, BPTT, finite differences") {
  Rng rng(11, 0);
  for (const Case& c : kCases) {
    CAPTURE(to_string(c.variant));
    CAPTURE(to_string(c.activation));
    for (int rep = 0; rep < 3; ++rep) {
      RtuParams p = random_rtu(rng, 4, 3, c.variant, c.activation);
      const auto xs = random_sequence(rng, 25, 3);
      const auto loss = random_quadratic_loss(8, 2, xs.size(), rng);
      const auto rtrl = as_flat(rtrl_gradient(p, xs, loss));
      const auto bptt = as_flat(bptt_gradient(p, xs, loss));
      CHECK(rel(rtrl, bptt) <= 1e-10);
      const auto fd = finite_difference_gradient(
          p, [&] { return rtu_sequence_loss(p, xs, loss); }, 1e-6);
      CHECK(rel(fd, bptt) <= 1e-5);
    }
  }
}

TEST_CASE("BPTT at length 1 equals the one-step analytic gradient") {
  Rng rng(12, 0);
  RtuParams p = random_rtu(rng, 3, 2, Variant::kLinear, Activation::kIdentity);
  const std::vector<Vec> xs = {random_vec(rng, 2)};
  const auto loss = random_quadratic_loss(6, 1, 1, rng);
  const auto c = derive_coefficients(p);
  // h = gamma (.) W x from zero state; dh/dW1 row k = gamma_k x.
  const RtuState s = rtu_step(RtuState::zeros(3), c, p, xs[0]);
  const Vec dy = loss.output_grad(0, s.combined(p.variant, p.activation));
  const Vec d1 = dy.head(3), d2 = dy.tail(3);
  const ParamGrad g = bptt_gradient(p, xs, loss);
  const Mat want_w1 = c.gamma.cwiseProduct(d1) * xs[0].transpose();
  const Mat want_w2 = c.gamma.cwiseProduct(d2) * xs[0].transpose();
  CHECK(relative_error(g.w_c1, want_w1) <= 1e-14);
  CHECK(relative_error(g.w_c2, want_w2) <= 1e-14);
  const Vec u1 = p.w_c1 * xs[0], u2 = p.w_c2 * xs[0];
  const Vec want_nu = c.dgamma_dnu.cwiseProduct(
      d1.cwiseProduct(u1) + d2.cwiseProduct(u2));
  CHECK(relative_error(g.nu_log, want_nu) <= 1e-14);
  CHECK(g.theta_log.norm() == 0.0);
}

TEST_CASE("loss independent of the recurrent output gives zero gradient") {
  Rng rng(13, 0);
  RtuParams p = random_rtu(rng, 3, 2, Variant::kNonlinear, Activation::kTanh);
  const auto xs = random_sequence(rng, 10, 2);
  auto loss = random_quadratic_loss(6, 2, 10, rng);
  loss.readout.setZero();
  for (double v : as_flat(bptt_gradient(p, xs, loss))) CHECK(v == 0.0);
  for (double v : as_flat(rtrl_gradient(p, xs, loss))) CHECK(v == 0.0);
}

TEST_CASE("BPTT refuses sequences beyond the unroll cap") {
  Rng rng(14, 0);
  RtuParams p = random_rtu(rng, 2, 1, Variant::kLinear, Activation::kRelu);
  const auto xs = random_sequence(rng, 20, 1);
  const auto loss = random_quadratic_loss(4, 1, 20, rng);
  try {
    bptt_gradient(p, xs, loss, 19);
    FAIL("expected cap error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
  }
  CHECK_NOTHROW(bptt_gradient(p, xs, loss, 20));
}

TEST_CASE("LRU oracle triangle") {
  Rng rng(15, 0);
  InitOptions init;
  init.r_min = 0.4;
  init.r_max = 0.95;
  for (int rep = 0; rep < 3; ++rep) {
    LruParams p = init_lru_params(4, 3, 2, init, rng);
    const auto xs = random_sequence(rng, 30, 3);
    const auto loss = random_quadratic_loss(2, 2, xs.size(), rng);
    LruGrad r = lru_rtrl_gradient(p, xs, loss);
    LruGrad b = lru_bptt_gradient(p, xs, loss);
    const auto rf = flatten(tensors(r)), bf = flatten(tensors(b));
    CHECK(rel(rf, bf) <= 1e-10);
    const auto fd = finite_difference_gradient(
        p, [&] { return lru_sequence_loss(p, xs, loss); }, 1e-6);
    CHECK(rel(fd, bf) <= 1e-5);
  }
}

TEST_CASE("block-diagonal oracle triangle") {
  Rng rng(16, 0);
  InitOptions init;
  init.r_min = 0.4;
  init.r_max = 0.95;
  for (const Case& c : kCases) {
    CAPTURE(to_string(c.variant));
    CAPTURE(to_string(c.activation));
    BlockDiagParams p =
        init_blockdiag_params(3, 2, c.variant, c.activation, init, rng);
    // Break the rotation structure.
    p.b += random_vec(rng, 3, -0.2, 0.2);
    p.d += random_vec(rng, 3, -0.2, 0.2);
    const auto xs = random_sequence(rng, 20, 2);
    const auto loss = random_quadratic_loss(6, 2, xs.size(), rng);
    BlockDiagGrad r = blockdiag_rtrl_gradient(p, xs, loss);
    BlockDiagGrad b = blockdiag_bptt_gradient(p, xs, loss);
    const auto rf = flatten(tensors(r)), bf = flatten(tensors(b));
    CHECK(rel(rf, bf) <= 1e-10);
    const auto fd = finite_difference_gradient(
        p, [&] { return blockdiag_sequence_loss(p, xs, loss); }, 1e-6);
    CHECK(rel(fd, bf) <= 1e-5);
  }
}

TEST_CASE("T-BPTT with a vacuous truncation equals full BPTT") {
  Rng rng(17, 0);
  for (const Case& c : kCases) {
    RtuParams p = random_rtu(rng, 3, 2, c.variant, c.activation);
    const auto xs = random_sequence(rng, 12, 2);
    const auto loss = random_quadratic_loss(6, 2, xs.size(), rng);
    UnrollRecord rec(12, 3);
    const auto co = derive_coefficients(p);
    RtuState s = RtuState::zeros(3);
    std::vector<Vec> grads;
    for (std::size_t t = 0; t < xs.size(); ++t) {
      s = rtu_step(s, co, p, xs[t]);
      rec.push(xs[t], s);
      grads.push_back(loss.output_grad(t, s.combined(p.variant, p.activation)));
    }
    CHECK(rel(as_flat(tbptt_gradient(p, rec, grads)),
              as_flat(bptt_gradient(p, xs, loss))) <= 1e-12);
  }
}

TEST_CASE("T-BPTT with T = 1 is the one-step gradient from the stored state") {
  Rng rng(18, 0);
  RtuParams p = random_rtu(rng, 3, 2, Variant::kNonlinear, Activation::kTanh);
  const auto xs = random_sequence(rng, 6, 2);
  UnrollRecord rec(1, 3);
  RtuLayer replay(p);
  for (const Vec& x : xs) {
    replay.step(x);
    rec.push(x, replay.state());
  }
  REQUIRE(rec.size() == 1);
  const Vec dy = random_vec(rng, 6);
  // One step from rec.start with zero traces.
  RtuLayer fresh(p);
  fresh.set_state(rec.start, TraceStore::zeros(3, 2));
  fresh.step(xs.back());
  const ParamGrad want = assemble_param_gradient(
      split_credit(dy, fresh.state(), p.variant, p.activation), fresh.traces());
  CHECK(rel(as_flat(tbptt_gradient_last(p, rec, dy)), as_flat(want)) <= 1e-12);
}

TEST_CASE("T-BPTT on a hand-built 3-step sequence keeps only short chains") {
  // n = d = 1, identity linear RTU, loss = h3_c1 (readout picks c1, last step).
  RtuParams p;
  p.nu_log = Vec::Constant(1, std::log(std::log(2.0)));  // r = 0.5
  p.theta_log = Vec::Constant(1, std::log(0.7));
  p.w_c1 = Mat::Constant(1, 1, 0.8);
  p.w_c2 = Mat::Constant(1, 1, -0.3);
  p.variant = Variant::kLinear;
  p.activation = Activation::kIdentity;
  const double g = 0.5 * std::cos(0.7), phi = 0.5 * std::sin(0.7);
  const double gam = std::sqrt(0.75);
  const std::vector<Vec> xs = {Vec::Constant(1, 1.0), Vec::Constant(1, -2.0),
                               Vec::Constant(1, 0.5)};
  const double x1 = 1.0, x2 = -2.0, x3 = 0.5;
  Vec dy(2);
  dy << 1.0, 0.0;

  auto run = [&](std::size_t T) {
    UnrollRecord rec(T, 1);
    RtuLayer layer(p);
    for (const Vec& x : xs) {
      layer.step(x);
      rec.push(x, layer.state());
    }
    return tbptt_gradient_last(p, rec, dy);
  };
  // d h3_c1 / d w1 over chains of length 1, 2, 3: gam x3, g gam x2,
  // (g^2 - phi^2) gam x1. d h3_c1 / d w2: 0, -phi gam x2, -2 g phi gam x1.
  const double w1_chain[3] = {gam * x3, g * gam * x2, (g * g - phi * phi) * gam * x1};
  const double w2_chain[3] = {0.0, -phi * gam * x2, -2.0 * g * phi * gam * x1};
  double w1 = 0.0, w2 = 0.0;
  for (std::size_t T = 1; T <= 3; ++T) {
    w1 += w1_chain[T - 1];
    w2 += w2_chain[T - 1];
    const ParamGrad got = run(T);
    CAPTURE(T);
    CHECK(got.w_c1(0, 0) == doctest::Approx(w1).epsilon(1e-13));
    CHECK(got.w_c2(0, 0) == doctest::Approx(w2).epsilon(1e-13));
  }
  // Explicit empty slots match the last-step form at any T >= length.
  UnrollRecord rec(3, 1);
  RtuLayer layer(p);
  for (const Vec& x : xs) {
    layer.step(x);
    rec.push(x, layer.state());
  }
  const auto a = as_flat(tbptt_gradient(p, rec, {Vec(), Vec(), dy}));
  const auto b = as_flat(run(5));
  CHECK(rel(a, b) <= 1e-14);
}

TEST_CASE("T-BPTT training step and errors") {
  Rng rng(19, 0);
  RtuParams p = random_rtu(rng, 2, 2, Variant::kLinear, Activation::kRelu);
  UnrollRecord rec(4, 2);
  Adam adam(AdamConfig{0.01});
  CHECK_THROWS_AS(tbptt_train_step(rec, p, adam, {}), Error);
  CHECK_THROWS_AS(UnrollRecord(0, 2), Error);
  RtuLayer layer(p);
  const auto xs = random_sequence(rng, 6, 2);
  std::vector<Vec> grads;
  for (const Vec& x : xs) {
    layer.step(x);
    rec.push(x, layer.state());
  }
  CHECK(rec.size() == 4);
  for (int i = 0; i < 4; ++i) grads.push_back(random_vec(rng, 4));
  const RtuParams before = p;
  tbptt_train_step(rec, p, adam, grads);
  CHECK(adam.steps() == 1);
  CHECK((p.w_c1 - before.w_c1).norm() > 0.0);
  CHECK_THROWS_AS(tbptt_gradient(p, rec, {Vec()}), Error);
}

TEST_CASE("dense T-BPTT gradient matches finite differences") {
  Rng rng(20, 0);
  DenseRnnParams p = init_dense_rnn(3, 3, 3, rng);
  DenseWindow win(2, 3);
  Vec h = Vec::Zero(3);
  const auto xs = random_sequence(rng, 5, 3);
  for (const Vec& x : xs) {
    h = dense_linear_rnn_step(h, p, x);
    win.push(x, h);
  }
  const int target = 1;
  const DenseRnnGrad got = dense_tbptt_gradient(p, win, target);
  auto loss = [&] {
    Vec s = win.start;
    for (const Vec& x : win.inputs) s = dense_linear_rnn_step(s, p, x);
    const Vec logits = p.w_y * s + p.b_y;
    const double mx = logits.maxCoeff();
    return -(logits[target] - mx -
             std::log((logits.array() - mx).exp().sum()));
  };
  CHECK(got.loss == doctest::Approx(loss()).epsilon(1e-12));
  const auto fd = finite_difference_gradient(p, loss, 1e-6);
  DenseRnnParams g = got.grad;
  CHECK(rel(flatten(tensors(g)), fd) <= 1e-7);
  CHECK_THROWS_AS(dense_tbptt_gradient(p, win, 3), Error);
}
