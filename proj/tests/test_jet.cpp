#include <doctest.h>

#include <cmath>
#include <span>
#include <vector>

#include "knw/jet.hpp"
#include "knw/rng.hpp"
#include "knw/tape.hpp"

using namespace knw;

namespace {

// Second-order finite differences of a plain scalar function, the
// independent route for every jet identity below.
template <class F>
double fd1(F f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2 * h);
}
template <class F>
double fd2(F f, double x, double h = 1e-4) {
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

Jet2<double> seed(double x) { return {x, 1.0, 0.0}; }

}  // namespace

TEST_CASE("sin jet follows the chain rule for sin(2t)") {
  // u(t) = sin(2t) at t = pi/4: value 1, slope 0, curvature -4.
  double t = M_PI / 4.0;
  Jet2<double> arg{2.0 * t, 2.0, 0.0};
  Jet2<double> u = sin(arg);
  CHECK(u.f == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(u.d1 == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(u.d2 == doctest::Approx(-4.0).epsilon(1e-13));
}

TEST_CASE("square and cube jets match symbolic derivatives") {
  double x = 1.3;
  Jet2<double> s = sq(seed(x));
  CHECK(s.f == doctest::Approx(x * x));
  CHECK(s.d1 == doctest::Approx(2.0 * x));
  CHECK(s.d2 == doctest::Approx(2.0));

  Jet2<double> cube = sq(seed(x)) * seed(x);
  CHECK(cube.f == doctest::Approx(x * x * x));
  CHECK(cube.d1 == doctest::Approx(3.0 * x * x));
  CHECK(cube.d2 == doctest::Approx(6.0 * x));
}

TEST_CASE("tanh and sigmoid jets match symbolic derivatives") {
  double x = 0.5;
  Jet2<double> th = tanh(seed(x));
  double t = std::tanh(x);
  CHECK(th.f == doctest::Approx(t).epsilon(1e-15));
  CHECK(th.d1 == doctest::Approx(1.0 - t * t).epsilon(1e-14));
  CHECK(th.d2 == doctest::Approx(-2.0 * t * (1.0 - t * t)).epsilon(1e-14));

  Jet2<double> sg = sigmoid(seed(x));
  double s = 1.0 / (1.0 + std::exp(-x));
  CHECK(sg.f == doctest::Approx(s).epsilon(1e-15));
  CHECK(sg.d1 == doctest::Approx(s * (1 - s)).epsilon(1e-14));
  CHECK(sg.d2 == doctest::Approx(s * (1 - s) * (1 - 2 * s)).epsilon(1e-14));
}

TEST_CASE("jet arithmetic matches finite differences on random compositions") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    double x = rng.uniform(-1.5, 1.5);
    auto f = [](double t) {
      return std::sin(t) * std::tanh(t) + 0.3 * t * t - std::cos(2.0 * t);
    };
    Jet2<double> j = sin(seed(x)) * tanh(seed(x)) + 0.3 * sq(seed(x)) -
                     cos(Jet2<double>{2.0 * x, 2.0, 0.0});
    CHECK(j.f == doctest::Approx(f(x)).epsilon(1e-13));
    CHECK(std::abs(j.d1 - fd1(f, x)) < 1e-6 * (1.0 + std::abs(j.d1)));
    CHECK(std::abs(j.d2 - fd2(f, x)) < 1e-4 * (1.0 + std::abs(j.d2)));
  }
}

TEST_CASE("tape-recorded jets reproduce plain jets bitwise") {
  double x = 0.37;
  Jet2<double> plain = tanh(sq(seed(x)) * sin(seed(x)));

  Tape tape;
  tape.reset();
  TapeCtx ctx{&tape};
  Jet2<Value> s{ctx.c(x), ctx.c(1.0), ctx.zero()};
  Jet2<Value> rec = tanh(sq(s) * sin(s));

  CHECK(tape.val(rec.f) == plain.f);
  CHECK(tape.val(rec.d1) == plain.d1);
  CHECK(tape.val(rec.d2) == plain.d2);
}

TEST_CASE("parameter gradients flow through second derivatives") {
  // g(a) = d^2/dx^2 sin(a x) at x0 equals -a^2 sin(a x0);
  // dg/da = -2 a sin(a x0) - a^2 x0 cos(a x0).
  const double x0 = 0.7;
  std::vector<double> p = {1.3};
  std::vector<double> g(1);
  Tape tape;
  double v = eval_and_grad(tape, p, g, [&](Tape& t, std::span<const Value> in) {
    TapeCtx ctx{&t};
    Jet2<Value> x{ctx.c(x0), ctx.c(1.0), ctx.zero()};
    Jet2<Value> u = sin(scale(in[0], x));
    return u.d2;
  });
  double a = p[0];
  CHECK(v == doctest::Approx(-a * a * std::sin(a * x0)).epsilon(1e-14));
  CHECK(g[0] ==
        doctest::Approx(-2.0 * a * std::sin(a * x0) - a * a * x0 * std::cos(a * x0))
            .epsilon(1e-13));
}
