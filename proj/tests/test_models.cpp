#include <doctest.h>

#include <cmath>
#include <vector>

#include "knw/metrics.hpp"
#include "knw/models.hpp"

using namespace knw;

namespace {

MLPSpec small_body(Activation act = Activation::sine, std::size_t input_dim = 1) {
  MLPSpec s;
  s.input_dim = input_dim;
  s.width = 6;
  s.depth = 2;
  s.output_dim = 0;
  s.activation = act;
  return s;
}

}  // namespace

TEST_CASE("multihead predictions are head-weighted basis combinations") {
  Rng rng(42);
  MhPinnModel m = make_mh_pinn(small_body(), 3, rng);
  CHECK(m.params.size() == mlp_param_count(m.body) + 3 * 6);

  std::vector<double> x = {0.3};
  std::vector<double> hidden;
  mlp_hidden<double>(m.body, m.body_params(), x, DoubleCtx{}, hidden);
  for (std::size_t task = 0; task < 3; ++task) {
    double manual = 0.0;
    auto w = m.head(task);
    for (std::size_t j = 0; j < hidden.size(); ++j) manual += w[j] * hidden[j];
    CHECK(mh_predict(m, task, x) == doctest::Approx(manual).epsilon(1e-15));
  }
  CHECK_THROWS_AS(mh_predict(m, 3, x), ContractViolation);
}

TEST_CASE("deeponet prediction is the branch-trunk dot product") {
  MLPSpec branch;
  branch.input_dim = 7;
  branch.width = 5;
  branch.depth = 2;
  branch.output_dim = 4;
  MLPSpec trunk;
  trunk.input_dim = 1;
  trunk.width = 4;
  trunk.depth = 2;
  trunk.output_dim = 0;
  Rng rng(9);
  PiDonModel m = make_pidon(branch, trunk, 10.0, rng);

  std::vector<double> f(7);
  for (std::size_t i = 0; i < 7; ++i) f[i] = 3.0 * std::sin(1.0 + double(i));
  std::vector<double> x = {0.4};

  std::vector<double> scaled(7);
  for (std::size_t i = 0; i < 7; ++i) scaled[i] = f[i] / 10.0;
  std::vector<double> bh, coeffs, th;
  mlp_hidden<double>(m.branch, m.branch_params(), scaled, DoubleCtx{}, bh);
  mlp_output<double>(m.branch, m.branch_params(), bh, coeffs);
  mlp_hidden<double>(m.trunk, m.trunk_params(), x, DoubleCtx{}, th);
  double manual = 0.0;
  for (std::size_t j = 0; j < 4; ++j) manual += coeffs[j] * th[j];

  CHECK(pidon_predict(m, f, x) == doctest::Approx(manual).epsilon(1e-15));

  std::vector<double> badf(6);
  CHECK_THROWS_AS(pidon_predict(m, badf, x), ContractViolation);
}

TEST_CASE("extract_basis tabulates hidden activations row per basis function") {
  Rng rng(11);
  MhPinnModel m = make_mh_pinn(small_body(Activation::tanh), 2, rng);
  Grid g = make_grid_1d(17, -1.0, 1.0);
  BasisMatrix b = extract_basis(m, g);
  CHECK(b.n_basis() == 6);
  CHECK(b.values.cols == 17);

  std::vector<double> hidden;
  for (std::size_t p : {std::size_t(0), std::size_t(8), std::size_t(16)}) {
    mlp_hidden<double>(m.body, m.body_params(), g.point(p), DoubleCtx{}, hidden);
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(b.values(j, p) == doctest::Approx(hidden[j]).epsilon(1e-15));
  }
}

TEST_CASE("deeponet evaluator agrees with pidon_predict on interior values") {
  TaskFamily fam = poisson_family(24);
  fam.n_tasks = 2;
  auto tasks = sample_tasks(fam, 2, 17);

  MLPSpec branch;
  branch.input_dim = fam.n_sensors();
  branch.width = 5;
  branch.depth = 2;
  branch.output_dim = 4;
  MLPSpec trunk;
  trunk.input_dim = 1;
  trunk.width = 4;
  trunk.depth = 2;
  trunk.output_dim = 0;
  Rng rng(4);
  PiDonModel m = make_pidon(branch, trunk, fam.forcing_scale, rng);

  DoubleCtx ctx;
  PiDonEval<DoubleCtx> eval(m.branch, m.trunk, m.input_scale,
                            std::span<const double>(m.params.values),
                            std::span<const TaskInstance>(tasks), fam, ctx);
  for (std::size_t task = 0; task < 2; ++task) {
    for (std::size_t p : {std::size_t(0), std::size_t(11), std::size_t(23)}) {
      auto e = eval.interior(task, p);
      CHECK(e.u == doctest::Approx(pidon_predict(m, tasks[task].f_sensor,
                                                 fam.grid.point(p)))
                       .epsilon(1e-13));
    }
  }
}

TEST_CASE("deeponet laplacian entries match finite differences") {
  TaskFamily fam = allen_cahn_family(7);
  fam.n_tasks = 1;
  auto tasks = sample_tasks(fam, 1, 2);

  MLPSpec branch;
  branch.input_dim = fam.n_sensors();
  branch.width = 4;
  branch.depth = 2;
  branch.output_dim = 3;
  MLPSpec trunk;
  trunk.input_dim = 2;
  trunk.width = 3;
  trunk.depth = 2;
  trunk.output_dim = 0;
  Rng rng(6);
  PiDonModel m = make_pidon(branch, trunk, fam.forcing_scale, rng);

  DoubleCtx ctx;
  PiDonEval<DoubleCtx> eval(m.branch, m.trunk, m.input_scale,
                            std::span<const double>(m.params.values),
                            std::span<const TaskInstance>(tasks), fam, ctx);

  std::size_t p = 24;  // interior point of the 7x7 grid
  auto e = eval.interior(0, p);
  auto x = fam.grid.point(p);
  double h = 1e-4;
  auto u = [&](double a, double b) {
    std::vector<double> q = {a, b};
    return pidon_predict(m, tasks[0].f_sensor, q);
  };
  double lap_fd = (u(x[0] + h, x[1]) + u(x[0] - h, x[1]) + u(x[0], x[1] + h) +
                   u(x[0], x[1] - h) - 4.0 * u(x[0], x[1])) /
                  (h * h);
  CHECK(std::abs(e.lap - lap_fd) < 1e-4 * (1.0 + std::abs(lap_fd)));
}

TEST_CASE("relative l2 basics") {
  std::vector<double> truth = {3.0, 4.0};
  std::vector<double> same = truth;
  std::vector<double> zeros = {0.0, 0.0};
  CHECK(relative_l2(same, truth) == doctest::Approx(0.0));
  CHECK(relative_l2(zeros, truth) == doctest::Approx(1.0));
  CHECK_THROWS_AS(relative_l2(truth, zeros), ContractViolation);
  std::vector<double> shorter = {1.0};
  CHECK_THROWS_AS(relative_l2(shorter, truth), ContractViolation);
}

TEST_CASE("svd spectrum of hand-built matrices") {
  BasisMatrix b;
  b.grid = make_grid_1d(3, 0.0, 1.0);
  b.values = Matrix(2, 3);
  b.values(0, 0) = 3.0;
  b.values(1, 1) = 4.0;
  auto s = svd_spectrum(b);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(0.75));

  BasisMatrix zero;
  zero.grid = b.grid;
  zero.values = Matrix(2, 3);
  CHECK_THROWS_AS(svd_spectrum(zero), ContractViolation);
}

TEST_CASE("orthogonal equal-norm rows give a flat spectrum") {
  TaskFamily fam = poisson_family();
  BasisMatrix b;
  b.grid = fam.grid;
  b.values = Matrix(4, fam.grid.size());
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t p = 0; p < fam.grid.size(); ++p)
      b.values(k, p) = mode_value(Pde::poisson1d, k + 1, fam.grid.point(p));
  auto s = svd_spectrum(b);
  for (double v : s) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
}
