#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "rtu/rtu.hpp"

using namespace rtu;
using rtu::testing::central_difference;
using rtu::testing::random_mat;
using rtu::testing::random_vec;

namespace {

RtuParams one_unit(double nu_log, double theta_log, double w1, double w2,
                   Variant v = Variant::kLinear,
                   Activation f = Activation::kIdentity) {
  RtuParams p;
  p.nu_log = Vec::Constant(1, nu_log);
  p.theta_log = Vec::Constant(1, theta_log);
  p.w_c1 = Mat::Constant(1, 1, w1);
  p.w_c2 = Mat::Constant(1, 1, w2);
  p.variant = v;
  p.activation = f;
  return p;
}

RtuParams random_params(Rng& rng, int n, int d, Variant v, Activation f) {
  InitOptions init;
  init.r_min = 0.3;
  init.r_max = 0.95;
  return init_rtu_params(n, d, v, f, init, rng);
}

// h_T after running the layer over xs from zero state.
RtuState run(const RtuParams& p, const std::vector<Vec>& xs) {
  const Coefficients c = derive_coefficients(p);
  RtuState s = RtuState::zeros(p.width());
  for (const Vec& x : xs) s = rtu_step(s, c, p, x);
  return s;
}

TraceStore run_traces(const RtuParams& p, const std::vector<Vec>& xs) {
  RtuLayer layer(p);
  for (const Vec& x : xs) layer.step(x);
  return layer.traces();
}

}  // namespace

TEST_CASE("derive_coefficients at nu_log = 0, theta_log = 0") {
  // Reference values from a 30-digit mpmath evaluation.
  const auto c = derive_coefficients(one_unit(0.0, 0.0, 1.0, 1.0));
  CHECK(c.r[0] == doctest::Approx(0.367879441171442).epsilon(1e-14));
  CHECK(c.g[0] == doctest::Approx(0.198766110346413).epsilon(1e-14));
  CHECK(c.phi[0] == doctest::Approx(0.309559875653112).epsilon(1e-14));
  CHECK(c.gamma[0] == doctest::Approx(0.929873495032194).epsilon(1e-14));
  CHECK(c.g[0] * c.g[0] + c.phi[0] * c.phi[0] ==
        doctest::Approx(c.r[0] * c.r[0]).epsilon(1e-12));
}

TEST_CASE("derive_coefficients near r = 1 clamps gamma") {
  const auto c = derive_coefficients(one_unit(-30.0, 0.3, 1.0, 1.0));
  CHECK(c.r[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.r[0] <= 1.0);
  CHECK(c.gamma[0] == doctest::Approx(std::sqrt(kEpsGamma)));
  CHECK(std::isfinite(c.dgamma_dnu[0]));
}

TEST_CASE("derive_coefficients at r = 0.5") {
  for (double th : {-2.0, 0.0, 1.5}) {
    const auto c = derive_coefficients(one_unit(std::log(std::log(2.0)), th, 1, 1));
    CHECK(c.r[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(c.gamma[0] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-14));
  }
}

TEST_CASE("derive_coefficients rejects non-finite parameters") {
  auto p = one_unit(std::numeric_limits<double>::quiet_NaN(), 0, 1, 1);
  try {
    derive_coefficients(p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("parameterizations keep r in (0, 1] and theta positive") {
  Rng rng(7);
  for (RParam rp : {RParam::kExpExp, RParam::kDirect, RParam::kExp,
                    RParam::kSigmoid}) {
    auto p = init_rtu_params(16, 2, Variant::kLinear, Activation::kRelu, {},
                             rng, rp);
    // A large step in either direction, then projection.
    p.nu_log.array() += 5.0 * (random_vec(rng, 16).array());
    project_params(p);
    const auto c = derive_coefficients(p);
    CHECK((c.r.array() > 0.0).all());
    CHECK((c.r.array() <= 1.0).all());
    CHECK((c.theta.array() > 0.0).all());
  }
}

TEST_CASE("rtu_step from zero state injects gamma-scaled input") {
  Rng rng(1);
  auto p = random_params(rng, 5, 3, Variant::kLinear, Activation::kRelu);
  const auto c = derive_coefficients(p);
  const Vec x = random_vec(rng, 3);
  const auto s = rtu_step(RtuState::zeros(5), c, p, x);
  CHECK((s.h_c1 - c.gamma.cwiseProduct(p.w_c1 * x)).norm() < 1e-15);
  CHECK((s.h_c2 - c.gamma.cwiseProduct(p.w_c2 * x)).norm() < 1e-15);
  CHECK(s.pre_c1 == s.h_c1);
}

TEST_CASE("rtu_step is a scaled rotation") {
  const auto p = one_unit(std::log(std::log(2.0)), std::log(M_PI / 2), 1, 1);
  const auto c = derive_coefficients(p);
  RtuState s = RtuState::zeros(1);
  s.h_c1[0] = 1.0;
  const auto next = rtu_step(s, c, p, Vec::Zero(1));
  CHECK(next.h_c1[0] == doctest::Approx(0.0).epsilon(1e-15).scale(1.0));
  CHECK(next.h_c2[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("nonlinear relu clamps the pre-activation") {
  auto p = one_unit(0.0, 0.0, 0.0, 0.0, Variant::kNonlinear, Activation::kRelu);
  const auto c = derive_coefficients(p);
  p.w_c1(0, 0) = -0.3 / c.gamma[0];
  p.w_c2(0, 0) = 0.2 / c.gamma[0];
  const auto s = rtu_step(RtuState::zeros(1), c, p, Vec::Ones(1));
  CHECK(s.pre_c1[0] == doctest::Approx(-0.3));
  CHECK(s.pre_c2[0] == doctest::Approx(0.2));
  CHECK(s.h_c1[0] == 0.0);
  CHECK(s.h_c2[0] == doctest::Approx(0.2));
}

TEST_CASE("rtu_step rejects mismatched input") {
  Rng rng(2);
  auto p = random_params(rng, 3, 2, Variant::kLinear, Activation::kRelu);
  const auto c = derive_coefficients(p);
  try {
    rtu_step(RtuState::zeros(3), c, p, Vec::Zero(5));
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShape);
  }
}

TEST_CASE("linear traces from zero history") {
  Rng rng(3);
  auto p = random_params(rng, 4, 3, Variant::kLinear, Activation::kRelu);
  const auto c = derive_coefficients(p);
  const Vec x = random_vec(rng, 3);
  const auto t = linear_trace_step(TraceStore::zeros(4, 3), RtuState::zeros(4),
                                   c, p, x);
  const Mat expected = c.gamma * x.transpose();
  CHECK((t.E_w11 - expected).norm() < 1e-15);
  CHECK((t.E_w22 - expected).norm() < 1e-15);
  CHECK(t.E_w12.norm() == 0.0);
  CHECK(t.E_w21.norm() == 0.0);
  CHECK(t.e_theta_c1.norm() == 0.0);
  CHECK(t.e_theta_c2.norm() == 0.0);
}

TEST_CASE("nu trace carries the input-normalizer derivative") {
  // With w_c1 x = 1 and zero history the nu trace is d gamma / d nu_log,
  // i.e. +r^2 exp(nu_log) / gamma = 0.145541607497832 (mpmath).
  const auto p = one_unit(0.0, 0.0, 1.0, 0.0);
  const auto c = derive_coefficients(p);
  const auto t = linear_trace_step(TraceStore::zeros(1, 1), RtuState::zeros(1),
                                   c, p, Vec::Ones(1));
  CHECK(t.e_nu_c1[0] == doctest::Approx(0.145541607497832).epsilon(1e-13));
  // Independent check by central differences of h_c1 after one step.
  auto q = p;
  const double fd = central_difference(
      q.nu_log[0], [&] { return run(q, {Vec::Ones(1)}).h_c1[0]; }, 1e-6);
  CHECK(t.e_nu_c1[0] == doctest::Approx(fd).epsilon(1e-8));
}

TEST_CASE("nonlinear identity traces are bit-identical to linear traces") {
  Rng rng(4);
  auto lin = random_params(rng, 6, 3, Variant::kLinear, Activation::kIdentity);
  auto nonlin = lin;
  nonlin.variant = Variant::kNonlinear;
  RtuLayer a(lin), b(nonlin);
  for (int t = 0; t < 20; ++t) {
    const Vec x = random_vec(rng, 3);
    CHECK(a.step(x) == b.step(x));
  }
  CHECK(a.traces().e_nu_c1 == b.traces().e_nu_c1);
  CHECK(a.traces().e_theta_c2 == b.traces().e_theta_c2);
  CHECK(a.traces().E_w11 == b.traces().E_w11);
  CHECK(a.traces().E_w21 == b.traces().E_w21);

  // Same through the functional entry points.
  const auto c = derive_coefficients(lin);
  const Vec x = random_vec(rng, 3);
  const auto next = rtu_step(a.state(), c, nonlin, x);
  const auto t1 = linear_trace_step(a.traces(), a.state(), c, lin, x);
  const auto t2 = nonlinear_trace_step(a.traces(), a.state(), c, nonlin, x, next);
  CHECK(t1.e_nu_c2 == t2.e_nu_c2);
  CHECK(t1.E_w12 == t2.E_w12);
  CHECK(t1.E_w22 == t2.E_w22);
}

TEST_CASE("relu with negative pre-activations zeroes the c1 traces") {
  Rng rng(5);
  auto p = random_params(rng, 3, 2, Variant::kNonlinear, Activation::kRelu);
  RtuLayer layer(p);
  for (int t = 0; t < 5; ++t) layer.step(random_vec(rng, 2));
  const auto c = derive_coefficients(p);
  RtuState next = layer.state();
  next.pre_c1 = Vec::Constant(3, -0.5);
  const auto t = nonlinear_trace_step(layer.traces(), layer.state(), c, p,
                                      random_vec(rng, 2), next);
  CHECK(t.e_nu_c1.norm() == 0.0);
  CHECK(t.e_theta_c1.norm() == 0.0);
  CHECK(t.E_w11.norm() == 0.0);
  CHECK(t.E_w12.norm() == 0.0);
}

TEST_CASE("traces match finite differences of the state") {
  for (auto [variant, f] : {std::pair{Variant::kLinear, Activation::kRelu},
                            std::pair{Variant::kNonlinear, Activation::kTanh},
                            std::pair{Variant::kNonlinear, Activation::kRelu}}) {
    Rng rng(11);
    const int n = 4, d = 3;
    auto p = random_params(rng, n, d, variant, f);
    for (int steps : {1, 7}) {
      const auto xs = rtu::testing::random_sequence(rng, steps, d);
      const TraceStore tr = run_traces(p, xs);
      auto q = p;
      double worst = 0.0;
      auto check = [&](double& slot, double analytic, bool c1, int k) {
        const double fd = central_difference(
            slot,
            [&] {
              const auto s = run(q, xs);
              return c1 ? s.h_c1[k] : s.h_c2[k];
            },
            1e-6);
        worst = std::max(worst, std::abs(fd - analytic) /
                                    std::max(std::abs(fd), 1e-3));
      };
      for (int k = 0; k < n; ++k) {
        check(q.nu_log[k], tr.e_nu_c1[k], true, k);
        check(q.nu_log[k], tr.e_nu_c2[k], false, k);
        check(q.theta_log[k], tr.e_theta_c1[k], true, k);
        check(q.theta_log[k], tr.e_theta_c2[k], false, k);
        for (int j = 0; j < d; ++j) {
          check(q.w_c1(k, j), tr.E_w11(k, j), true, k);
          check(q.w_c1(k, j), tr.E_w21(k, j), false, k);
          check(q.w_c2(k, j), tr.E_w12(k, j), true, k);
          check(q.w_c2(k, j), tr.E_w22(k, j), false, k);
        }
      }
      CAPTURE(steps);
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("assemble_param_gradient edge cases") {
  Rng rng(6);
  auto p = random_params(rng, 3, 2, Variant::kLinear, Activation::kRelu);
  RtuLayer layer(p);
  for (int t = 0; t < 4; ++t) layer.step(random_vec(rng, 2));

  const CreditSignal zero{Vec::Zero(3), Vec::Zero(3)};
  const auto g0 = assemble_param_gradient(zero, layer.traces());
  CHECK(g0.nu_log.norm() + g0.theta_log.norm() + g0.w_c1.norm() +
            g0.w_c2.norm() ==
        0.0);

  const CreditSignal credit{random_vec(rng, 3), random_vec(rng, 3)};
  const auto g1 = assemble_param_gradient(credit, TraceStore::zeros(3, 2));
  CHECK(g1.nu_log.norm() + g1.w_c2.norm() == 0.0);

  const auto g = assemble_param_gradient(credit, layer.traces());
  const auto& t = layer.traces();
  CHECK(g.w_c1(1, 0) == doctest::Approx(credit.d_c1[1] * t.E_w11(1, 0) +
                                        credit.d_c2[1] * t.E_w21(1, 0)));
  CHECK(g.w_c2(2, 1) == doctest::Approx(credit.d_c1[2] * t.E_w12(2, 1) +
                                        credit.d_c2[2] * t.E_w22(2, 1)));
}

TEST_CASE("reset_episode zeroes state and traces") {
  Rng rng(8);
  auto p = random_params(rng, 3, 2, Variant::kNonlinear, Activation::kTanh);
  RtuLayer layer(p);
  for (int t = 0; t < 4; ++t) layer.step(random_vec(rng, 2));
  layer.reset();
  CHECK(layer.state().h_c1.norm() + layer.state().pre_c2.norm() == 0.0);
  CHECK(layer.traces().E_w22.norm() + layer.traces().e_nu_c1.norm() == 0.0);
  const Vec x = random_vec(rng, 2);
  layer.step(x);
  const auto c = derive_coefficients(p);
  CHECK((layer.traces().E_w11 -
         (c.gamma * x.transpose()).cwiseProduct(
             activate_grad(Activation::kTanh, layer.state().pre_c1) *
             Vec::Ones(2).transpose()))
            .norm() < 1e-15);
}

TEST_CASE("trace memory is 4n + 4nd and independent of steps") {
  Rng rng(9);
  for (int n : {1, 3, 8}) {
    for (int d : {1, 5}) {
      RtuLayer layer(random_params(rng, n, d, Variant::kLinear, Activation::kRelu));
      CHECK(layer.traces().scalar_count() ==
            static_cast<std::size_t>(4 * n + 4 * n * d));
      for (int t = 0; t < 50; ++t) layer.step(random_vec(rng, d));
      CHECK(layer.traces().scalar_count() ==
            static_cast<std::size_t>(4 * n + 4 * n * d));
    }
  }
}

TEST_CASE("linear recurrence never grows the state without input") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    InitOptions init;  // full ring r in (0, 1)
    auto p = init_rtu_params(6, 2, Variant::kLinear, Activation::kIdentity,
                             init, rng);
    p.nu_log.array() += 3.0 * random_vec(rng, 6).array();
    const auto c = derive_coefficients(p);
    RtuState s = RtuState::zeros(6);
    s.h_c1 = random_vec(rng, 6);
    s.h_c2 = random_vec(rng, 6);
    double prev = std::hypot(s.h_c1.norm(), s.h_c2.norm());
    for (int t = 0; t < 30; ++t) {
      s = rtu_step(s, c, p, Vec::Zero(2));
      const double now = std::hypot(s.h_c1.norm(), s.h_c2.norm());
      CHECK(now <= prev * (1.0 + 1e-14));
      prev = now;
    }
  }
}

TEST_CASE("online layer flags non-finite traces with the step index") {
  auto p = one_unit(0.0, 0.0, 1.0, 1.0);
  RtuLayer layer(p);
  Vec x(1);
  x[0] = std::numeric_limits<double>::infinity();
  try {
    layer.step(x);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}
