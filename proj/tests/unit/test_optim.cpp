#include <cmath>
#include <limits>

#include "doctest.h"
#include "rtu/optim.hpp"

using namespace rtu;

namespace {

struct Pair {
  Vec a, b;
  template <typename F>
  void for_each_tensor(F&& f) {
    f("a", flat(a));
    f("b", flat(b));
  }
};

}  // namespace

TEST_CASE("global norm clipping") {
  Vec g(2);
  g << 3.0, 4.0;
  TensorList list = {flat(g)};
  CHECK(clip_global_norm(list, 1.0) == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));
  CHECK(clip_global_norm(list, 10.0) == doctest::Approx(1.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK_THROWS_AS(clip_global_norm(list, 0.0), Error);
}

TEST_CASE("Adam first step moves each coordinate by lr against the gradient") {
  Pair p{Vec::Constant(2, 1.0), Vec::Constant(1, -1.0)};
  Pair g{Vec(2), Vec::Constant(1, -0.001)};
  g.a << 5.0, -0.3;
  Adam adam(AdamConfig{0.1});
  adam.step(p, g);
  CHECK(p.a[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.a[1] == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(p.b[0] == doctest::Approx(-0.9).epsilon(1e-4));
  CHECK(adam.steps() == 1);
  CHECK(adam.first_moment().size() == 3);
}

TEST_CASE("Adam rejects non-finite gradients without changing state") {
  Pair p{Vec::Constant(2, 1.0), Vec::Constant(1, 2.0)};
  Pair g{Vec::Constant(2, 0.5), Vec::Constant(1, 0.5)};
  Adam adam;
  adam.step(p, g);
  const Pair before = p;
  const auto m = adam.first_moment();
  g.b[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam.step(p, g);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
  }
  CHECK(p.a == before.a);
  CHECK(p.b == before.b);
  CHECK(adam.first_moment() == m);
  CHECK(adam.steps() == 1);
}

TEST_CASE("Adam minimizes a quadratic") {
  Pair p{Vec::Constant(2, 3.0), Vec::Constant(1, -4.0)};
  Adam adam(AdamConfig{0.05});
  for (int i = 0; i < 2000; ++i) {
    Pair g{2.0 * (p.a.array() - 1.0).matrix(), 2.0 * p.b};
    adam.step(p, g);
  }
  CHECK(std::abs(p.a[0] - 1.0) < 1e-3);
  CHECK(std::abs(p.b[0]) < 1e-3);
}

TEST_CASE("Adam layout checks") {
  Pair p{Vec::Zero(2), Vec::Zero(1)};
  Pair g{Vec::Zero(3), Vec::Zero(1)};
  Adam adam;
  CHECK_THROWS_AS(adam.step(p, g), Error);
}
