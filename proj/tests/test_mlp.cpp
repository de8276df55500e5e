#include <doctest.h>

#include <cmath>
#include <span>
#include <vector>

#include "knw/errors.hpp"
#include "knw/mlp.hpp"
#include "knw/rng.hpp"

using namespace knw;

namespace {

MLPSpec scalar_net(Activation act, std::size_t input_dim = 1) {
  MLPSpec s;
  s.input_dim = input_dim;
  s.width = 5;
  s.depth = 2;
  s.output_dim = 1;
  s.activation = act;
  return s;
}

std::vector<double> init(const MLPSpec& s, std::uint64_t seed) {
  std::vector<double> p(mlp_param_count(s));
  Rng rng(seed);
  mlp_init_params(s, rng, p);
  return p;
}

double forward1(const MLPSpec& s, std::span<const double> p, double x) {
  std::vector<double> hidden, out;
  std::vector<double> xs = {x};
  mlp_forward(s, p, xs, hidden, out);
  return out[0];
}

}  // namespace

TEST_CASE("parameter count covers all layers") {
  MLPSpec s;
  s.input_dim = 2;
  s.width = 20;
  s.depth = 2;
  s.output_dim = 0;
  // (20*2 + 20) + (20*20 + 20)
  CHECK(mlp_param_count(s) == 480);
  s.output_dim = 3;
  CHECK(mlp_param_count(s) == 480 + 63);
}

TEST_CASE("initialisation is deterministic and respects glorot bounds") {
  MLPSpec s = scalar_net(Activation::tanh);
  auto p1 = init(s, 11), p2 = init(s, 11), p3 = init(s, 12);
  CHECK(p1 == p2);
  CHECK(p1 != p3);

  double lim0 = std::sqrt(6.0 / (5 + 1));
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(p1[i]) <= lim0);
}

TEST_CASE("first-layer scale multiplies only the first weight matrix") {
  MLPSpec plain = scalar_net(Activation::sine);
  MLPSpec scaled = plain;
  scaled.first_layer_scale = 30.0;
  auto p = init(plain, 5), q = init(scaled, 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(q[i] == doctest::Approx(30.0 * p[i]));
  for (std::size_t i = 5; i < p.size(); ++i) CHECK(q[i] == p[i]);
}

TEST_CASE("jet2_forward matches finite differences for both activations") {
  for (Activation act : {Activation::sine, Activation::tanh}) {
    MLPSpec s = scalar_net(act);
    auto p = init(s, 31 + static_cast<int>(act));
    std::vector<double> dir = {1.0};
    for (double x : {-0.8, -0.1, 0.4, 0.9}) {
      std::vector<double> xs = {x};
      Jet2<double> j = jet2_forward(s, p, xs, dir);

      double h = 1e-4;
      double up = forward1(s, p, x + h), at = forward1(s, p, x),
             dn = forward1(s, p, x - h);
      CHECK(j.f == doctest::Approx(at).epsilon(1e-13));
      CHECK(std::abs(j.d1 - (up - dn) / (2 * h)) < 1e-5 * (1.0 + std::abs(j.d1)));
      CHECK(std::abs(j.d2 - (up - 2 * at + dn) / (h * h)) <
            1e-4 * (1.0 + std::abs(j.d2)));
    }
  }
}

TEST_CASE("coordinate-direction jets give axis second derivatives in 2d") {
  MLPSpec s = scalar_net(Activation::tanh, 2);
  auto p = init(s, 99);
  std::vector<double> x = {0.3, 0.6};

  auto f = [&](double a, double b) {
    std::vector<double> hidden, out;
    std::vector<double> xs = {a, b};
    mlp_forward(s, p, xs, hidden, out);
    return out[0];
  };

  std::vector<double> ex = {1.0, 0.0}, ey = {0.0, 1.0};
  Jet2<double> jx = jet2_forward(s, p, x, ex);
  Jet2<double> jy = jet2_forward(s, p, x, ey);

  double h = 1e-4;
  double uxx = (f(x[0] + h, x[1]) - 2 * f(x[0], x[1]) + f(x[0] - h, x[1])) / (h * h);
  double uyy = (f(x[0], x[1] + h) - 2 * f(x[0], x[1]) + f(x[0], x[1] - h)) / (h * h);
  CHECK(std::abs(jx.d2 - uxx) < 1e-4 * (1.0 + std::abs(uxx)));
  CHECK(std::abs(jy.d2 - uyy) < 1e-4 * (1.0 + std::abs(uyy)));
}

TEST_CASE("tape route agrees with the plain route and differentiates it") {
  MLPSpec s = scalar_net(Activation::sine);
  auto p = init(s, 17);
  std::vector<double> xs = {0.25};
  std::vector<double> dir = {1.0};

  Jet2<double> plain = jet2_forward(s, p, xs, dir);

  // d2 of the network as an objective: check adjoints against central
  // differences of the plain-route d2 over a few parameters.
  Tape tape;
  std::vector<double> grad(p.size());
  double v = eval_and_grad(tape, p, grad, [&](Tape& t, std::span<const Value> in) {
    return jet2_forward_tape(t, s, in, xs, dir).d2;
  });
  CHECK(v == doctest::Approx(plain.d2).epsilon(1e-13));

  double h = 1e-6;
  for (std::size_t i : {std::size_t(0), std::size_t(7), p.size() - 2, p.size() - 1}) {
    auto pp = p;
    pp[i] += h;
    double up = jet2_forward(s, pp, xs, dir).d2;
    pp[i] -= 2 * h;
    double dn = jet2_forward(s, pp, xs, dir).d2;
    double fd = (up - dn) / (2 * h);
    CHECK(std::abs(grad[i] - fd) < 2e-5 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("contract checks") {
  MLPSpec s = scalar_net(Activation::tanh);
  auto p = init(s, 1);
  std::vector<double> xs = {0.0};
  std::vector<double> bad_dir = {2.0};
  CHECK_THROWS_AS(jet2_forward(s, p, xs, bad_dir), ContractViolation);

  MLPSpec nohead = s;
  nohead.output_dim = 0;
  std::vector<double> q(mlp_param_count(nohead));
  std::vector<double> unit = {1.0};
  CHECK_THROWS_AS(jet2_forward(nohead, q, xs, unit), ContractViolation);
}
